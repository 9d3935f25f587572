//! Baseline interpreter: loads a bundle, configures every operator through the
//! registry and runs the plan, tagging each tracked allocation with the
//! phase it happens in (load, configure, invoke).
//!
//! Unknown status is taken from [`HiddenStatusTable`], the way a live
//! runtime observes it from the device; the interpreter never searches.

pub mod hidden;
pub mod memory;
mod tensor;

use std::collections::BTreeMap;
use std::mem::size_of;
use std::sync::{Arc, Mutex};

use crate::graph::{validate, ComputationalGraph, DataType, GraphError, ModelBundle, OpId, OperatorNode, TensorSpec};
use crate::kernels::{
    map_options_to_params, ComputingUnit, DeviceInfo, KernelError, OpStatus, ParamRecord, Registry, TensorView,
};

pub use hidden::HiddenStatusTable;
pub use memory::{MemoryTracker, Phase, PhaseCounters};
pub use tensor::TensorData;

use crate::kernels::BoundCall;

#[derive(Debug, thiserror::Error)]
pub enum InterpError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("operator {index} ({op}): {source}")]
    Op {
        index: usize,
        op: OpId,
        #[source]
        source: KernelError,
    },
    #[error("input mismatch: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, InterpError>;

/// Weight tensors decoded from the store, keyed by tensor id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightTensors {
    pub by_tensor: BTreeMap<usize, TensorData>,
}

impl WeightTensors {
    pub fn decode(bundle: &ModelBundle) -> Result<Self> {
        let mut by_tensor = BTreeMap::new();
        for t in &bundle.graph.tensors {
            if let Some(key) = t.weight_ref {
                let entry = bundle.weights.get(key).ok_or_else(|| {
                    GraphError::MalformedWeights(format!("tensor {} refers to missing key {key}", t.id))
                })?;
                by_tensor.insert(t.id, TensorData::from_entry(entry));
            }
        }
        Ok(Self { by_tensor })
    }

    pub fn byte_len(&self) -> u64 {
        self.by_tensor.values().map(TensorData::byte_len).sum()
    }
}

/// Everything needed to bind one operator.
#[derive(Debug, Clone)]
pub struct StepSpec {
    pub unit: ComputingUnit,
    pub params: ParamRecord,
    pub status: OpStatus,
}

/// One configured operator.
#[derive(Debug)]
pub struct Step {
    pub op_index: usize,
    pub unit: ComputingUnit,
    pub params: ParamRecord,
    pub status: OpStatus,
    pub inputs: Vec<usize>,
    pub output: usize,
    pub call: BoundCall,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub dtype: DataType,
    pub shape: Vec<usize>,
}

impl TensorInfo {
    pub fn elements(&self) -> usize {
        self.shape.iter().product()
    }
}

/// A loaded and configured model.
#[derive(Debug)]
pub struct ExecutablePlan {
    device: DeviceInfo,
    steps: Vec<Step>,
    weights: Arc<WeightTensors>,
    tensors: Vec<TensorInfo>,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    buffers: Mutex<Vec<Option<TensorData>>>,
    tracker: MemoryTracker,
}

fn op_err(index: usize, node: &OperatorNode, source: KernelError) -> InterpError {
    InterpError::Op {
        index,
        op: node.op.clone(),
        source,
    }
}

/// Dtype an operator computes in: that of its first input.
pub fn op_dtype(graph: &ComputationalGraph, node: &OperatorNode) -> DataType {
    node.inputs
        .first()
        .or(node.outputs.first())
        .and_then(|&id| graph.tensor(id))
        .map(|t| t.dtype)
        .unwrap_or(DataType::F32)
}

fn graph_metadata_bytes(graph: &ComputationalGraph) -> u64 {
    let tensors: usize = graph
        .tensors
        .iter()
        .map(|t| size_of::<TensorSpec>() + t.name.len() + t.shape.len() * size_of::<usize>())
        .sum();
    let operators: usize = graph
        .operators
        .iter()
        .map(|n| size_of::<OperatorNode>() + (n.inputs.len() + n.outputs.len()) * size_of::<usize>())
        .sum();
    (tensors + operators) as u64
}

/// Loads with the builtin registry and the default runtime status.
pub fn load(bundle: &ModelBundle, device: DeviceInfo) -> Result<ExecutablePlan> {
    load_with(bundle, device, &Registry::builtin(), &HiddenStatusTable::default())
}

pub fn load_with(
    bundle: &ModelBundle,
    device: DeviceInfo,
    registry: &Registry,
    hidden: &HiddenStatusTable,
) -> Result<ExecutablePlan> {
    let tracker = MemoryTracker::new();
    tracker.set_phase(Phase::Load);
    let report = validate(bundle);
    if !report.is_valid() {
        return Err(GraphError::Invalid(report).into());
    }
    let graph = &bundle.graph;
    let weights = WeightTensors::decode(bundle)?;
    tracker.alloc(graph_metadata_bytes(graph) + weights.byte_len());

    tracker.set_phase(Phase::Configure);
    let mut shapes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for t in &graph.tensors {
        if t.weight_ref.is_some() || graph.inputs.contains(&t.id) {
            shapes.insert(t.id, t.shape.clone());
        }
    }
    let mut specs = Vec::with_capacity(graph.operators.len());
    for (index, node) in graph.operators.iter().enumerate() {
        let unit = registry
            .lookup(&node.op, op_dtype(graph, node), &device)
            .map_err(|e| op_err(index, node, e))?
            .clone();
        let input_shapes: Vec<&[usize]> = node
            .inputs
            .iter()
            .map(|id| shapes.get(id).map(Vec::as_slice).unwrap_or(&[]))
            .collect();
        let params = map_options_to_params(node, &input_shapes).map_err(|e| op_err(index, node, e))?;
        let out = unit
            .prepare(&params, &input_shapes)
            .map_err(|e| op_err(index, node, e))?;
        let status = hidden.resolve(&unit).map_err(|e| op_err(index, node, e))?;
        for &o in &node.outputs {
            shapes.insert(o, out.clone());
        }
        specs.push(StepSpec { unit, params, status });
    }
    ExecutablePlan::assemble_tracked(graph, Arc::new(weights), specs, device, tracker)
}

impl ExecutablePlan {
    /// Binds a plan from explicitly chosen units, parameters and status.
    pub fn assemble(
        graph: &ComputationalGraph,
        weights: Arc<WeightTensors>,
        specs: Vec<StepSpec>,
        device: DeviceInfo,
    ) -> Result<Self> {
        let tracker = MemoryTracker::new();
        tracker.set_phase(Phase::Configure);
        Self::assemble_tracked(graph, weights, specs, device, tracker)
    }

    fn assemble_tracked(
        graph: &ComputationalGraph,
        weights: Arc<WeightTensors>,
        specs: Vec<StepSpec>,
        device: DeviceInfo,
        tracker: MemoryTracker,
    ) -> Result<Self> {
        if specs.len() != graph.operators.len() {
            return Err(InterpError::Input(format!(
                "{} step specs for {} operators",
                specs.len(),
                graph.operators.len()
            )));
        }
        let mut tensors: Vec<TensorInfo> = graph
            .tensors
            .iter()
            .map(|t| TensorInfo {
                dtype: t.dtype,
                shape: t.shape.clone(),
            })
            .collect();
        let mut steps = Vec::with_capacity(specs.len());
        for (index, (node, spec)) in graph.operators.iter().zip(specs).enumerate() {
            let input_shapes: Vec<&[usize]> = node.inputs.iter().map(|&id| tensors[id].shape.as_slice()).collect();
            let out_shape = spec
                .unit
                .prepare(&spec.params, &input_shapes)
                .map_err(|e| op_err(index, node, e))?;
            let &[output] = node.outputs.as_slice() else {
                return Err(op_err(
                    index,
                    node,
                    KernelError::Shape("expected exactly one output".into()),
                ));
            };
            let call = spec
                .unit
                .bind(&spec.params, &spec.status, &input_shapes, &out_shape, &device)
                .map_err(|e| op_err(index, node, e))?;
            tensors[output].shape = out_shape;
            steps.push(Step {
                op_index: index,
                unit: spec.unit,
                params: spec.params,
                status: spec.status,
                inputs: node.inputs.clone(),
                output,
                call,
            });
        }

        let mut buffers = Vec::with_capacity(tensors.len());
        let mut buffer_bytes = 0u64;
        for (id, info) in tensors.iter().enumerate() {
            if weights.by_tensor.contains_key(&id) {
                buffers.push(None);
            } else {
                let data = TensorData::zeros(info.dtype, info.elements());
                buffer_bytes += data.byte_len();
                buffers.push(Some(data));
            }
        }
        let step_bytes: usize = steps
            .iter()
            .map(|s| size_of::<Step>() + s.inputs.len() * size_of::<usize>() + s.call.geometry_literal.len())
            .sum();
        tracker.alloc(buffer_bytes + step_bytes as u64);
        Ok(Self {
            device,
            steps,
            weights,
            tensors,
            inputs: graph.inputs.clone(),
            outputs: graph.outputs.clone(),
            buffers: Mutex::new(buffers),
            tracker,
        })
    }

    pub fn device(&self) -> DeviceInfo {
        self.device
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn input_info(&self) -> Vec<TensorInfo> {
        self.inputs.iter().map(|&id| self.tensors[id].clone()).collect()
    }

    pub fn output_info(&self) -> Vec<TensorInfo> {
        self.outputs.iter().map(|&id| self.tensors[id].clone()).collect()
    }

    pub fn counters(&self) -> PhaseCounters {
        self.tracker.counters()
    }

    /// Runs the plan on one set of graph inputs, in graph input order.
    pub fn invoke(&self, inputs: &[TensorData]) -> Result<Vec<TensorData>> {
        if inputs.len() != self.inputs.len() {
            return Err(InterpError::Input(format!(
                "expected {} inputs, got {}",
                self.inputs.len(),
                inputs.len()
            )));
        }
        for (i, (data, &id)) in inputs.iter().zip(&self.inputs).enumerate() {
            let info = &self.tensors[id];
            if data.dtype() != info.dtype || data.len() != info.elements() {
                return Err(InterpError::Input(format!(
                    "input {i}: expected {} x {:?}, got {} x {} values",
                    info.dtype,
                    info.shape,
                    data.dtype(),
                    data.len()
                )));
            }
        }
        self.tracker.set_phase(Phase::Invoke);
        let mut buffers = self.buffers.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        for (data, &id) in inputs.iter().zip(&self.inputs) {
            match (buffers[id].as_mut(), data) {
                (Some(TensorData::F32(dst)), TensorData::F32(src)) => dst.copy_from_slice(src),
                (Some(TensorData::I32(dst)), TensorData::I32(src)) => dst.copy_from_slice(src),
                _ => return Err(InterpError::Input(format!("input tensor {id} has no buffer"))),
            }
        }
        for step in &self.steps {
            let scratch_bytes = (step.call.scratch_len * size_of::<f32>()) as u64;
            self.tracker.alloc(scratch_bytes);
            let mut scratch = vec![0.0f32; step.call.scratch_len];
            let mut out = buffers[step.output]
                .take()
                .ok_or_else(|| InterpError::Input(format!("tensor {} has no buffer", step.output)))?;
            let result = {
                let views: Vec<TensorView<'_>> = step
                    .inputs
                    .iter()
                    .map(|id| match self.weights.by_tensor.get(id) {
                        Some(w) => w.view(),
                        None => buffers[*id].as_ref().expect("inputs precede outputs").view(),
                    })
                    .collect();
                step.call.run(&views, out.view_mut(), &mut scratch)
            };
            buffers[step.output] = Some(out);
            drop(scratch);
            self.tracker.free(scratch_bytes);
            result.map_err(|source| InterpError::Op {
                index: step.op_index,
                op: step.unit.key.op.clone(),
                source,
            })?;
        }
        Ok(self
            .outputs
            .iter()
            .map(|id| {
                buffers[*id]
                    .clone()
                    .or_else(|| self.weights.by_tensor.get(id).cloned())
                    .expect("every tensor has storage")
            })
            .collect())
    }

    /// Runs the plan on concatenated little-endian inputs and returns the
    /// concatenated little-endian outputs.
    pub fn invoke_raw(&self, raw: &[u8]) -> Result<Vec<u8>> {
        let info = self.input_info();
        let expected: usize = info.iter().map(|t| t.elements() * t.dtype.byte_width()).sum();
        if raw.len() != expected {
            return Err(InterpError::Input(format!(
                "expected {expected} input bytes, got {}",
                raw.len()
            )));
        }
        let mut inputs = Vec::with_capacity(info.len());
        let mut pos = 0;
        for t in &info {
            let n = t.elements() * t.dtype.byte_width();
            inputs.push(TensorData::from_le_bytes(t.dtype, &raw[pos..pos + n]).expect("aligned"));
            pos += n;
        }
        Ok(self.invoke(&inputs)?.iter().flat_map(TensorData::to_le_bytes).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{BuiltinOp, WeightEntry, WeightStore};

    fn spec(id: usize, shape: &[usize], dtype: DataType, weight_ref: Option<u32>) -> TensorSpec {
        TensorSpec {
            id,
            name: format!("t{id}"),
            dtype,
            shape: shape.to_vec(),
            weight_ref,
        }
    }

    fn identity() -> ModelBundle {
        ModelBundle {
            graph: ComputationalGraph {
                version: 1,
                tensors: vec![
                    spec(0, &[1, 4], DataType::F32, None),
                    spec(1, &[2, 2], DataType::F32, None),
                ],
                operators: vec![OperatorNode::new(OpId::builtin(BuiltinOp::Reshape), vec![0], vec![1])
                    .with_option("new_shape", vec![2i64, 2])],
                inputs: vec![0],
                outputs: vec![1],
            },
            weights: WeightStore::default(),
        }
    }

    #[test]
    fn identity_copies_bytes() {
        let plan = load(&identity(), DeviceInfo::default()).unwrap();
        assert_eq!(plan.steps().len(), 1);
        let input = TensorData::F32(vec![1.0, -0.0, 3.5, f32::NAN]);
        let out = plan.invoke(std::slice::from_ref(&input)).unwrap();
        assert_eq!(out[0].to_le_bytes(), input.to_le_bytes());
    }

    #[test]
    fn phases_are_separated() {
        let plan = load(&identity(), DeviceInfo::default()).unwrap();
        let before = plan.counters();
        assert!(before.load_bytes > 0);
        assert!(before.configure_bytes > 0);
        assert_eq!(before.invoke_bytes, 0);
        plan.invoke(&[TensorData::F32(vec![0.0; 4])]).unwrap();
        let after = plan.counters();
        assert_eq!(after.load_bytes, before.load_bytes);
        assert_eq!(after.configure_bytes, before.configure_bytes);
        assert!(after.peak_bytes <= after.total());
    }

    #[test]
    fn input_mismatch_is_rejected() {
        let plan = load(&identity(), DeviceInfo::default()).unwrap();
        assert!(plan.invoke(&[TensorData::F32(vec![0.0; 3])]).is_err());
        assert!(plan.invoke(&[TensorData::I32(vec![0; 4])]).is_err());
        assert!(plan.invoke(&[]).is_err());
        assert!(plan.invoke_raw(&[0u8; 15]).is_err());
    }

    #[test]
    fn unsupported_dtype_names_operator() {
        let mut weights = WeightStore::default();
        weights.insert(0, WeightEntry::from_i32(vec![1, 1, 1, 1], &[1]));
        let node = OperatorNode::new(OpId::builtin(BuiltinOp::Conv2d), vec![0, 1], vec![2])
            .with_option("stride_h", 1i64)
            .with_option("stride_w", 1i64)
            .with_option("dilation_h", 1i64)
            .with_option("dilation_w", 1i64)
            .with_option("padding", "VALID")
            .with_option("activation", "NONE");
        let bundle = ModelBundle {
            graph: ComputationalGraph {
                version: 1,
                tensors: vec![
                    spec(0, &[1, 2, 2, 1], DataType::I32, None),
                    spec(1, &[1, 1, 1, 1], DataType::I32, Some(0)),
                    spec(2, &[1, 2, 2, 1], DataType::I32, None),
                ],
                operators: vec![node],
                inputs: vec![0],
                outputs: vec![2],
            },
            weights,
        };
        let err = load(&bundle, DeviceInfo::default()).unwrap_err();
        assert!(matches!(err, InterpError::Op { index: 0, .. }), "{err}");
        assert!(err.to_string().contains("operator 0"), "{err}");
    }

    #[test]
    fn i32_add_uses_integer_unit() {
        let bundle = ModelBundle {
            graph: ComputationalGraph {
                version: 1,
                tensors: vec![
                    spec(0, &[3], DataType::I32, None),
                    spec(1, &[3], DataType::I32, None),
                    spec(2, &[3], DataType::I32, None),
                ],
                operators: vec![OperatorNode::new(OpId::builtin(BuiltinOp::Add), vec![0, 1], vec![2])
                    .with_option("activation", "NONE")],
                inputs: vec![0, 1],
                outputs: vec![2],
            },
            weights: WeightStore::default(),
        };
        let plan = load(&bundle, DeviceInfo::default()).unwrap();
        assert_eq!(plan.steps()[0].unit.template_id, "add_i32_ref");
        let out = plan
            .invoke(&[TensorData::I32(vec![1, 2, i32::MAX]), TensorData::I32(vec![10, -20, 1])])
            .unwrap();
        assert_eq!(out[0], TensorData::I32(vec![11, -18, i32::MIN]));
    }
}
