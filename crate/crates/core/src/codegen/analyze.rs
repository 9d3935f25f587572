use std::collections::BTreeMap;

use crate::graph::{ModelBundle, ShapeMap};
use crate::kernels::{map_options_to_params, KernelError, ParamRecord};

use super::{CodegenError, ExtractionResult, Result};

/// Where an operator input comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    /// Graph input, by position in the graph input list.
    GraphInput { slot: usize, tensor: usize },
    /// Weight tensor bound to a store entry.
    Weight { tensor: usize, key: u32 },
    /// Output of an earlier operator.
    Produced { op: usize, tensor: usize },
}

impl Operand {
    pub fn tensor(&self) -> usize {
        match *self {
            Operand::GraphInput { tensor, .. } | Operand::Weight { tensor, .. } | Operand::Produced { tensor, .. } => {
                tensor
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpBinding {
    pub inputs: Vec<Operand>,
    pub output: usize,
    pub input_shapes: Vec<Vec<usize>>,
    pub output_shape: Vec<usize>,
}

/// Known configuration of every operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigAnalysis {
    pub params: Vec<ParamRecord>,
    pub bindings: Vec<OpBinding>,
    pub shapes: ShapeMap,
}

pub fn analyze_config(bundle: &ModelBundle, extraction: &ExtractionResult) -> Result<ConfigAnalysis> {
    let graph = &bundle.graph;
    let mut shapes = ShapeMap::new();
    let mut producer: BTreeMap<usize, usize> = BTreeMap::new();
    for &id in &graph.inputs {
        if let Some(t) = graph.tensor(id) {
            shapes.insert(id, t.shape.clone());
        }
    }
    for t in &graph.tensors {
        if let Some(key) = t.weight_ref {
            if bundle.weights.get(key).is_none() {
                return Err(CodegenError::DanglingWeight { tensor: t.id, key });
            }
            shapes.insert(t.id, t.shape.clone());
        }
    }

    let mut params = Vec::with_capacity(graph.operators.len());
    let mut bindings = Vec::with_capacity(graph.operators.len());
    for (index, (node, unit)) in graph.operators.iter().zip(&extraction.units).enumerate() {
        let fail = |source: KernelError| CodegenError::Operator {
            index,
            op: node.op.clone(),
            source,
        };
        let mut inputs = Vec::with_capacity(node.inputs.len());
        let mut input_shapes = Vec::with_capacity(node.inputs.len());
        for &id in &node.inputs {
            let t = graph
                .tensor(id)
                .ok_or_else(|| fail(KernelError::Shape(format!("unknown tensor {id}"))))?;
            let operand = if let Some(key) = t.weight_ref {
                Operand::Weight { tensor: id, key }
            } else if let Some(&op) = producer.get(&id) {
                Operand::Produced { op, tensor: id }
            } else if let Some(slot) = graph.inputs.iter().position(|&i| i == id) {
                Operand::GraphInput { slot, tensor: id }
            } else {
                return Err(fail(KernelError::Shape(format!(
                    "tensor {id} is read before it is written"
                ))));
            };
            inputs.push(operand);
            input_shapes.push(shapes[&id].clone());
        }
        let refs: Vec<&[usize]> = input_shapes.iter().map(Vec::as_slice).collect();
        let record = map_options_to_params(node, &refs).map_err(fail)?;
        let output_shape = unit.prepare(&record, &refs).map_err(fail)?;
        let &[output] = node.outputs.as_slice() else {
            return Err(fail(KernelError::Shape("expected exactly one output".into())));
        };
        shapes.insert(output, output_shape.clone());
        producer.insert(output, index);
        params.push(record);
        bindings.push(OpBinding {
            inputs,
            output,
            input_shapes,
            output_shape,
        });
    }
    Ok(ConfigAnalysis {
        params,
        bindings,
        shapes,
    })
}
