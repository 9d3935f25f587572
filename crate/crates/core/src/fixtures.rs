//! Seeded sample models used by tests, benchmarks and the `build-fixture`
//! command. Weights are uniform in `[-1, 1]` scaled by `1/sqrt(fan_in)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::shapes::{infer_node, ShapeMap};
use crate::graph::{
    BuiltinOp, ComputationalGraph, DataType, ModelBundle, OpId, OperatorNode, OptionValue, TensorSpec, WeightEntry,
    WeightStore, FORMAT_VERSION, SCALE_SHIFT,
};

pub const FIXTURE_NAMES: [&str; 5] = ["identity", "mlp", "lenet", "dwblock", "custom"];

pub const DEFAULT_SEED: u64 = 7;

/// Builds the named fixture, or `None` for an unknown name.
pub fn fixture(name: &str, seed: u64) -> Option<ModelBundle> {
    Some(match name {
        "identity" => identity(),
        "mlp" => mlp(seed),
        "lenet" => lenet(seed),
        "dwblock" => dwblock(seed),
        "custom" => custom(seed),
        _ => return None,
    })
}

/// Incremental graph builder; operator output shapes come from shape inference.
pub struct GraphBuilder {
    tensors: Vec<TensorSpec>,
    operators: Vec<OperatorNode>,
    inputs: Vec<usize>,
    weights: WeightStore,
    shapes: ShapeMap,
    rng: ChaCha8Rng,
}

impl GraphBuilder {
    pub fn new(seed: u64) -> Self {
        Self {
            tensors: Vec::new(),
            operators: Vec::new(),
            inputs: Vec::new(),
            weights: WeightStore::default(),
            shapes: ShapeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn tensor(&mut self, name: String, dtype: DataType, shape: Vec<usize>, weight_ref: Option<u32>) -> usize {
        let id = self.tensors.len();
        self.shapes.insert(id, shape.clone());
        self.tensors.push(TensorSpec {
            id,
            name,
            dtype,
            shape,
            weight_ref,
        });
        id
    }

    pub fn input(&mut self, shape: &[usize]) -> usize {
        self.input_typed(shape, DataType::F32)
    }

    pub fn input_typed(&mut self, shape: &[usize], dtype: DataType) -> usize {
        let id = self.tensor(format!("input_{}", self.inputs.len()), dtype, shape.to_vec(), None);
        self.inputs.push(id);
        id
    }

    /// Adds an F32 weight with explicit values.
    pub fn constant(&mut self, shape: &[usize], values: &[f32]) -> usize {
        let key = self.weights.entries.len() as u32;
        self.weights.insert(key, WeightEntry::from_f32(shape.to_vec(), values));
        self.tensor(format!("w{key}"), DataType::F32, shape.to_vec(), Some(key))
    }

    /// Adds a random F32 weight scaled by `1/sqrt(fan_in)`.
    pub fn weight(&mut self, shape: &[usize], fan_in: usize) -> usize {
        let scale = 1.0 / (fan_in.max(1) as f32).sqrt();
        let n: usize = shape.iter().product();
        let values: Vec<f32> = (0..n).map(|_| self.rng.gen_range(-1.0f32..=1.0) * scale).collect();
        self.constant(shape, &values)
    }

    /// Appends an operator; returns the id of its output tensor.
    pub fn op(&mut self, op: OpId, inputs: &[usize], options: &[(&str, OptionValue)]) -> usize {
        let mut node = OperatorNode::new(op, inputs.to_vec(), vec![self.tensors.len()]);
        for (k, v) in options {
            node.options.insert(k.to_string(), v.clone());
        }
        let index = self.operators.len();
        let shape = infer_node(&node, index, &self.shapes)
            .expect("fixture operators are well-formed")
            .expect("fixture operators have known shapes");
        let dtype = self.tensors[inputs[0]].dtype;
        let out = self.tensor(format!("t{index}"), dtype, shape, None);
        debug_assert_eq!(node.outputs, [out]);
        self.operators.push(node);
        out
    }

    pub fn finish(self, outputs: &[usize]) -> ModelBundle {
        ModelBundle {
            graph: ComputationalGraph {
                version: FORMAT_VERSION,
                tensors: self.tensors,
                operators: self.operators,
                inputs: self.inputs,
                outputs: outputs.to_vec(),
            },
            weights: self.weights,
        }
    }

    pub fn conv2d(&mut self, x: usize, out_c: usize, k: usize, padding: &str, act: &str) -> usize {
        let in_c = *self.shapes[&x].last().expect("rank 4");
        let filter = self.weight(&[out_c, k, k, in_c], k * k * in_c);
        let bias = self.weight(&[out_c], k * k * in_c);
        self.op(
            OpId::builtin(BuiltinOp::Conv2d),
            &[x, filter, bias],
            &conv_options(padding, act, None),
        )
    }

    pub fn depthwise(&mut self, x: usize, k: usize, multiplier: usize, padding: &str, act: &str) -> usize {
        let in_c = *self.shapes[&x].last().expect("rank 4");
        let filter = self.weight(&[1, k, k, in_c * multiplier], k * k);
        let bias = self.weight(&[in_c * multiplier], k * k);
        self.op(
            OpId::builtin(BuiltinOp::DepthwiseConv2d),
            &[x, filter, bias],
            &conv_options(padding, act, Some(multiplier)),
        )
    }

    pub fn max_pool(&mut self, x: usize, size: usize) -> usize {
        self.op(
            OpId::builtin(BuiltinOp::MaxPool2d),
            &[x],
            &[
                ("filter_h", (size as i64).into()),
                ("filter_w", (size as i64).into()),
                ("stride_h", (size as i64).into()),
                ("stride_w", (size as i64).into()),
                ("padding", "VALID".into()),
                ("activation", "NONE".into()),
            ],
        )
    }

    pub fn fully_connected(&mut self, x: usize, units: usize, act: &str) -> usize {
        let depth = *self.shapes[&x].last().expect("rank >= 1");
        let w = self.weight(&[units, depth], depth);
        let b = self.weight(&[units], depth);
        self.op(
            OpId::builtin(BuiltinOp::FullyConnected),
            &[x, w, b],
            &[("activation", act.into())],
        )
    }

    pub fn softmax(&mut self, x: usize) -> usize {
        self.op(OpId::builtin(BuiltinOp::Softmax), &[x], &[("beta", 1.0f64.into())])
    }

    pub fn relu(&mut self, x: usize) -> usize {
        self.op(OpId::builtin(BuiltinOp::Relu), &[x], &[])
    }

    pub fn reshape(&mut self, x: usize, shape: &[usize]) -> usize {
        let dims: Vec<i64> = shape.iter().map(|&d| d as i64).collect();
        self.op(OpId::builtin(BuiltinOp::Reshape), &[x], &[("new_shape", dims.into())])
    }
}

fn conv_options(padding: &str, act: &str, multiplier: Option<usize>) -> Vec<(&'static str, OptionValue)> {
    let mut v: Vec<(&'static str, OptionValue)> = vec![
        ("stride_h", 1i64.into()),
        ("stride_w", 1i64.into()),
        ("dilation_h", 1i64.into()),
        ("dilation_w", 1i64.into()),
        ("padding", padding.into()),
        ("activation", act.into()),
    ];
    if let Some(m) = multiplier {
        v.push(("depth_multiplier", (m as i64).into()));
    }
    v
}

/// `[1,4]` reshaped to `[2,2]`.
pub fn identity() -> ModelBundle {
    let mut b = GraphBuilder::new(0);
    let x = b.input(&[1, 4]);
    let y = b.reshape(x, &[2, 2]);
    b.finish(&[y])
}

/// 4 -> 8 (RELU) -> 3 -> softmax.
pub fn mlp(seed: u64) -> ModelBundle {
    let mut b = GraphBuilder::new(seed);
    let x = b.input(&[1, 4]);
    let h = b.fully_connected(x, 8, "RELU");
    let o = b.fully_connected(h, 3, "NONE");
    let y = b.softmax(o);
    b.finish(&[y])
}

/// LeNet-5 style classifier on a 28x28 single-channel image.
pub fn lenet(seed: u64) -> ModelBundle {
    let mut b = GraphBuilder::new(seed);
    let x = b.input(&[1, 28, 28, 1]);
    let c1 = b.conv2d(x, 6, 5, "VALID", "RELU");
    let p1 = b.max_pool(c1, 2);
    let c2 = b.conv2d(p1, 16, 5, "VALID", "RELU");
    let p2 = b.max_pool(c2, 2);
    let flat = b.reshape(p2, &[1, 256]);
    let f1 = b.fully_connected(flat, 120, "RELU");
    let f2 = b.fully_connected(f1, 84, "RELU");
    let f3 = b.fully_connected(f2, 10, "NONE");
    let y = b.softmax(f3);
    b.finish(&[y])
}

/// Pointwise expand, depthwise 3x3, pointwise project, ReLU.
pub fn dwblock(seed: u64) -> ModelBundle {
    let mut b = GraphBuilder::new(seed);
    let x = b.input(&[1, 8, 8, 4]);
    let e = b.conv2d(x, 8, 1, "VALID", "RELU");
    let d = b.depthwise(e, 3, 1, "SAME", "RELU6");
    let p = b.conv2d(d, 4, 1, "VALID", "NONE");
    let y = b.relu(p);
    b.finish(&[y])
}

/// The MLP with a custom SCALE_SHIFT operator after the hidden layer.
pub fn custom(seed: u64) -> ModelBundle {
    let mut b = GraphBuilder::new(seed);
    let x = b.input(&[1, 4]);
    let h = b.fully_connected(x, 8, "RELU");
    let s = b.op(
        OpId::custom(SCALE_SHIFT),
        &[h],
        &[("scale", 0.5f64.into()), ("shift", 0.25f64.into())],
    );
    let o = b.fully_connected(s, 3, "NONE");
    let y = b.softmax(o);
    b.finish(&[y])
}
