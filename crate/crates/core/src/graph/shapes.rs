//! Static shape inference over a validated graph.

use std::collections::BTreeMap;

use super::{BuiltinOp, ComputationalGraph, GraphError, OpId, OperatorNode, Result, SCALE_SHIFT};

pub type ShapeMap = BTreeMap<usize, Vec<usize>>;

/// Output extent of one spatial axis.
///
/// VALID: `ceil((in - effective_k + 1) / stride)`, SAME: `ceil(in / stride)`,
/// where `effective_k = (k - 1) * dilation + 1`.
pub fn spatial_output(
    input: usize,
    kernel: usize,
    stride: usize,
    dilation: usize,
    same: bool,
) -> std::result::Result<usize, String> {
    if stride == 0 || dilation == 0 || kernel == 0 {
        return Err("stride, dilation and kernel must be positive".into());
    }
    if same {
        return Ok(input.div_ceil(stride));
    }
    let effective = (kernel - 1) * dilation + 1;
    if effective > input {
        return Err(format!("effective kernel {effective} exceeds input extent {input}"));
    }
    Ok((input - effective + 1).div_ceil(stride))
}

fn err(op_index: usize, message: impl Into<String>) -> GraphError {
    GraphError::Shape {
        op_index,
        message: message.into(),
    }
}

fn opt_usize(node: &OperatorNode, op_index: usize, key: &str) -> Result<usize> {
    node.options
        .get(key)
        .and_then(|v| v.as_int())
        .filter(|&v| v > 0)
        .map(|v| v as usize)
        .ok_or_else(|| err(op_index, format!("missing required option: {key}")))
}

fn opt_same(node: &OperatorNode, op_index: usize) -> Result<bool> {
    match node.options.get("padding").and_then(|v| v.as_str()) {
        Some("SAME") => Ok(true),
        Some("VALID") => Ok(false),
        _ => Err(err(op_index, "missing required option: padding")),
    }
}

fn input_shape<'a>(shapes: &'a ShapeMap, node: &OperatorNode, op_index: usize, slot: usize) -> Result<&'a [usize]> {
    let id = *node
        .inputs
        .get(slot)
        .ok_or_else(|| err(op_index, format!("missing input #{slot}")))?;
    shapes
        .get(&id)
        .map(|s| s.as_slice())
        .ok_or_else(|| err(op_index, format!("input tensor {id} has no shape yet")))
}

fn rank4(shape: &[usize], op_index: usize, what: &str) -> Result<[usize; 4]> {
    <[usize; 4]>::try_from(shape).map_err(|_| err(op_index, format!("{what} must be rank 4, got {shape:?}")))
}

fn check_arity(node: &OperatorNode, op_index: usize, min: usize, max: usize) -> Result<()> {
    let n = node.inputs.len();
    if n < min || n > max {
        return Err(err(op_index, format!("expected {min}..={max} inputs, got {n}")));
    }
    if node.outputs.len() != 1 {
        return Err(err(op_index, "expected exactly one output"));
    }
    Ok(())
}

/// Output shape of a single operator given the shapes computed so far.
pub fn infer_node(node: &OperatorNode, op_index: usize, shapes: &ShapeMap) -> Result<Option<Vec<usize>>> {
    let op = match &node.op {
        OpId::Builtin(code) => {
            BuiltinOp::from_code(*code).ok_or_else(|| err(op_index, format!("unknown opcode {code}")))?
        }
        OpId::Custom(name) if name == SCALE_SHIFT => {
            check_arity(node, op_index, 1, 1)?;
            return Ok(Some(input_shape(shapes, node, op_index, 0)?.to_vec()));
        }
        // Unknown custom operators keep their declared output shape.
        OpId::Custom(_) => return Ok(None),
    };

    let shape = match op {
        BuiltinOp::Conv2d | BuiltinOp::DepthwiseConv2d => {
            check_arity(node, op_index, 2, 3)?;
            let [n, h, w, c] = rank4(input_shape(shapes, node, op_index, 0)?, op_index, "input")?;
            let [fo, kh, kw, fi] = rank4(input_shape(shapes, node, op_index, 1)?, op_index, "filter")?;
            let out_c = if op == BuiltinOp::Conv2d {
                if fi != c {
                    return Err(err(op_index, format!("filter channels {fi} != input channels {c}")));
                }
                fo
            } else {
                let m = opt_usize(node, op_index, "depth_multiplier")?;
                if fo != 1 || fi != c * m {
                    return Err(err(
                        op_index,
                        format!("depthwise filter [{fo},{kh},{kw},{fi}] does not match {c} channels x multiplier {m}"),
                    ));
                }
                fi
            };
            if node.inputs.len() == 3 {
                let bias = input_shape(shapes, node, op_index, 2)?;
                if bias.iter().product::<usize>() != out_c {
                    return Err(err(op_index, format!("bias {bias:?} does not match {out_c} channels")));
                }
            }
            let same = opt_same(node, op_index)?;
            let oh = spatial_output(
                h,
                kh,
                opt_usize(node, op_index, "stride_h")?,
                opt_usize(node, op_index, "dilation_h")?,
                same,
            )
            .map_err(|m| err(op_index, m))?;
            let ow = spatial_output(
                w,
                kw,
                opt_usize(node, op_index, "stride_w")?,
                opt_usize(node, op_index, "dilation_w")?,
                same,
            )
            .map_err(|m| err(op_index, m))?;
            vec![n, oh, ow, out_c]
        }
        BuiltinOp::AveragePool2d | BuiltinOp::MaxPool2d => {
            check_arity(node, op_index, 1, 1)?;
            let [n, h, w, c] = rank4(input_shape(shapes, node, op_index, 0)?, op_index, "input")?;
            let same = opt_same(node, op_index)?;
            let oh = spatial_output(
                h,
                opt_usize(node, op_index, "filter_h")?,
                opt_usize(node, op_index, "stride_h")?,
                1,
                same,
            )
            .map_err(|m| err(op_index, m))?;
            let ow = spatial_output(
                w,
                opt_usize(node, op_index, "filter_w")?,
                opt_usize(node, op_index, "stride_w")?,
                1,
                same,
            )
            .map_err(|m| err(op_index, m))?;
            vec![n, oh, ow, c]
        }
        BuiltinOp::FullyConnected => {
            check_arity(node, op_index, 2, 3)?;
            let input = input_shape(shapes, node, op_index, 0)?;
            let weights = input_shape(shapes, node, op_index, 1)?;
            let [units, depth] = <[usize; 2]>::try_from(weights)
                .map_err(|_| err(op_index, format!("weights must be rank 2, got {weights:?}")))?;
            let elements: usize = input.iter().product();
            if elements % depth != 0 {
                return Err(err(
                    op_index,
                    format!("input {input:?} is not divisible into rows of {depth}"),
                ));
            }
            if node.inputs.len() == 3 {
                let bias = input_shape(shapes, node, op_index, 2)?;
                if bias.iter().product::<usize>() != units {
                    return Err(err(op_index, format!("bias {bias:?} does not match {units} units")));
                }
            }
            vec![elements / depth, units]
        }
        BuiltinOp::Softmax | BuiltinOp::Relu => {
            check_arity(node, op_index, 1, 1)?;
            input_shape(shapes, node, op_index, 0)?.to_vec()
        }
        BuiltinOp::Reshape => {
            check_arity(node, op_index, 1, 1)?;
            let input = input_shape(shapes, node, op_index, 0)?;
            let new_shape = node
                .options
                .get("new_shape")
                .and_then(|v| v.as_int_list())
                .ok_or_else(|| err(op_index, "missing required option: new_shape"))?;
            if new_shape.iter().any(|&d| d <= 0) {
                return Err(err(op_index, "new_shape dimensions must be positive"));
            }
            let new_shape: Vec<usize> = new_shape.iter().map(|&d| d as usize).collect();
            let before: usize = input.iter().product();
            let after: usize = new_shape.iter().product();
            if before != after {
                return Err(err(op_index, format!("element count mismatch: {before} vs {after}")));
            }
            new_shape
        }
        BuiltinOp::Concatenation => {
            if node.inputs.is_empty() || node.outputs.len() != 1 {
                return Err(err(op_index, "concatenation needs inputs and one output"));
            }
            let first = input_shape(shapes, node, op_index, 0)?.to_vec();
            let axis = node
                .options
                .get("axis")
                .and_then(|v| v.as_int())
                .ok_or_else(|| err(op_index, "missing required option: axis"))?;
            let rank = first.len() as i64;
            let axis = if axis < 0 { axis + rank } else { axis };
            if axis < 0 || axis >= rank {
                return Err(err(op_index, format!("axis out of range for rank {rank}")));
            }
            let axis = axis as usize;
            let mut out = first.clone();
            for slot in 1..node.inputs.len() {
                let s = input_shape(shapes, node, op_index, slot)?;
                let compatible =
                    s.len() == first.len() && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
                if !compatible {
                    return Err(err(
                        op_index,
                        format!("incompatible concatenation shapes {first:?} and {s:?}"),
                    ));
                }
                out[axis] += s[axis];
            }
            out
        }
        BuiltinOp::Add => {
            check_arity(node, op_index, 2, 2)?;
            let a = input_shape(shapes, node, op_index, 0)?;
            let b = input_shape(shapes, node, op_index, 1)?;
            if a != b {
                return Err(err(op_index, format!("shape mismatch {a:?} vs {b:?}")));
            }
            a.to_vec()
        }
        BuiltinOp::Pad => {
            check_arity(node, op_index, 1, 1)?;
            let input = input_shape(shapes, node, op_index, 0)?;
            let pads = node
                .options
                .get("paddings")
                .and_then(|v| v.as_int_list())
                .ok_or_else(|| err(op_index, "missing required option: paddings"))?;
            if pads.len() != 2 * input.len() || pads.iter().any(|&p| p < 0) {
                return Err(err(
                    op_index,
                    format!("paddings must be {} non-negative values", 2 * input.len()),
                ));
            }
            if input.len() > 4 {
                return Err(err(op_index, "pad supports rank <= 4"));
            }
            input
                .iter()
                .enumerate()
                .map(|(i, &d)| d + pads[2 * i] as usize + pads[2 * i + 1] as usize)
                .collect()
        }
    };
    Ok(Some(shape))
}

/// Computes the shape of every tensor, checking operator outputs against the
/// declared tensor shapes.
pub fn infer_shapes(graph: &ComputationalGraph) -> Result<ShapeMap> {
    let mut shapes = ShapeMap::new();
    for &id in &graph.inputs {
        if let Some(t) = graph.tensor(id) {
            shapes.insert(id, t.shape.clone());
        }
    }
    for t in &graph.tensors {
        if t.weight_ref.is_some() {
            shapes.insert(t.id, t.shape.clone());
        }
    }
    for (op_index, node) in graph.operators.iter().enumerate() {
        let inferred = infer_node(node, op_index, &shapes)?;
        for (slot, &id) in node.outputs.iter().enumerate() {
            let declared = graph
                .tensor(id)
                .ok_or_else(|| err(op_index, format!("unknown output tensor {id}")))?;
            let shape = match (&inferred, slot) {
                (Some(shape), 0) => {
                    if *shape != declared.shape {
                        return Err(err(
                            op_index,
                            format!(
                                "inferred shape {shape:?} differs from declared {:?} for tensor {id}",
                                declared.shape
                            ),
                        ));
                    }
                    shape.clone()
                }
                _ => declared.shape.clone(),
            };
            shapes.insert(id, shape);
        }
    }
    for t in &graph.tensors {
        shapes.entry(t.id).or_insert_with(|| t.shape.clone());
    }
    Ok(shapes)
}
