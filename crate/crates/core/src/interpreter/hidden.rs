//! The runtime's view of unknown status: the values a live runtime would
//! observe from the device and tensors. Only the interpreter and tests read
//! this table.

use std::collections::BTreeMap;

use crate::kernels::{ComputingUnit, KernelError, OpStatus};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HiddenStatusTable {
    values: BTreeMap<(String, String), String>,
}

impl Default for HiddenStatusTable {
    fn default() -> Self {
        let mut t = Self::empty();
        t.set("conv2d_ref", "weights_layout", "OHWI");
        t.set("conv2d_tiled", "im2col", "true");
        for fc in ["fully_connected_ref", "fully_connected_tiled"] {
            t.set(fc, "weights_layout", "row_major");
            t.set(fc, "lhs_cacheable", "true");
        }
        t
    }
}

impl HiddenStatusTable {
    pub fn empty() -> Self {
        Self {
            values: BTreeMap::new(),
        }
    }

    /// Sets the value observed for `slot` of the unit with `template_id`.
    pub fn set(&mut self, template_id: &str, slot: &str, value: &str) {
        self.values
            .insert((template_id.to_string(), slot.to_string()), value.to_string());
    }

    pub fn get(&self, template_id: &str, slot: &str) -> Option<&str> {
        self.values
            .get(&(template_id.to_string(), slot.to_string()))
            .map(String::as_str)
    }

    /// Status assignment for every slot the unit declares.
    pub fn resolve(&self, unit: &ComputingUnit) -> Result<OpStatus, KernelError> {
        unit.status_schema
            .iter()
            .map(|slot| {
                self.get(unit.template_id, slot.name)
                    .map(|v| (slot.name.to_string(), v.to_string()))
                    .ok_or_else(|| KernelError::MissingStatus(slot.name.to_string()))
            })
            .collect()
    }
}
