use crate::graph::ComputationalGraph;
use crate::interpreter::op_dtype;
use crate::kernels::{ComputingUnit, DeviceInfo, Registry};

use super::{CodegenError, Result};

/// One selected computing unit per operator, in graph order.
#[derive(Debug, Clone)]
pub struct ExtractionResult {
    pub units: Vec<ComputingUnit>,
    pub device: DeviceInfo,
}

impl ExtractionResult {
    pub fn template_ids(&self) -> Vec<&'static str> {
        self.units.iter().map(|u| u.template_id).collect()
    }
}

pub fn extract_units(graph: &ComputationalGraph, device: DeviceInfo, registry: &Registry) -> Result<ExtractionResult> {
    let units = graph
        .operators
        .iter()
        .enumerate()
        .map(|(index, node)| {
            registry
                .lookup(&node.op, op_dtype(graph, node), &device)
                .cloned()
                .map_err(|source| CodegenError::Operator {
                    index,
                    op: node.op.clone(),
                    source,
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExtractionResult { units, device })
}
