//! Operator registry and computing-unit library.
//!
//! A computing unit is one `(operator, dtype, variant)` kernel. Its numeric
//! body lives in a template file under `units/`; the same file is compiled
//! into this crate and embedded verbatim by the code generator, so the
//! interpreter and generated programs execute identical source.

mod adapters;
pub mod params;
pub mod units;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::graph::{BuiltinOp, DataType, OpId, SCALE_SHIFT};

pub use params::{map_options_to_params, ActRange, ConvParams, ParamRecord, PoolParams};

/// K-tile used by the tiled variants.
pub const DEFAULT_K_TILE: usize = 16;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("unit {0} is already registered")]
    Duplicate(UnitKey),
    #[error("unsupported operator {0}")]
    UnsupportedOp(OpId),
    #[error("unsupported dtype {dtype} for operator {op}")]
    UnsupportedDtype { op: OpId, dtype: DataType },
    #[error("{0}")]
    Params(String),
    #[error("inconsistent shapes: {0}")]
    Shape(String),
    #[error("invalid status: {name}={value}")]
    InvalidStatus { name: String, value: String },
    #[error("invalid status: {0} is not assigned")]
    MissingStatus(String),
    #[error("unsupported status combination: {0}")]
    UnsupportedStatusCombination(String),
    #[error("tensor dtype does not match unit {0}")]
    DtypeMismatch(&'static str),
}

pub type Result<T> = std::result::Result<T, KernelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorHint {
    None,
    Wide,
}

/// Target device description used for unit selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct DeviceInfo {
    pub threads: usize,
    pub vector_hint: VectorHint,
}

impl DeviceInfo {
    pub fn new(threads: usize) -> Self {
        Self {
            threads: threads.max(1),
            vector_hint: VectorHint::None,
        }
    }
}

impl Default for DeviceInfo {
    fn default() -> Self {
        Self::new(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Reference,
    Tiled,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UnitKey {
    pub op: OpId,
    pub dtype: DataType,
    pub variant: Variant,
}

impl UnitKey {
    pub fn new(op: OpId, dtype: DataType, variant: Variant) -> Self {
        Self { op, dtype, variant }
    }
}

impl fmt::Display for UnitKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let variant = match self.variant {
            Variant::Reference => "reference",
            Variant::Tiled => "tiled",
        };
        write!(f, "{}/{}/{}", self.op.name(), self.dtype, variant)
    }
}

/// Which configuration-sharing rule groups a status slot across operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StatusScope {
    /// Shared by operators of the same unit with identical known parameters.
    Operator,
    /// Shared by every operator holding the same kind of data.
    Data(&'static str),
}

/// One unknown-status parameter of a unit.
///
/// `domain` is the enumerable set the configurator searches, in search
/// order. Kernels may recognise values outside it; validation of a concrete
/// value happens when the unit is bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatusSlot {
    pub name: &'static str,
    pub domain: Vec<&'static str>,
    pub scope: StatusScope,
    /// False for slots that only affect performance.
    pub value_changing: bool,
}

/// Status values for one operator, keyed by slot name.
pub type OpStatus = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamField {
    pub name: &'static str,
    pub kind: &'static str,
}

/// Borrowed tensor contents handed to a unit.
#[derive(Debug, Clone, Copy)]
pub enum TensorView<'a> {
    F32(&'a [f32]),
    I32(&'a [i32]),
}

#[derive(Debug)]
pub enum TensorViewMut<'a> {
    F32(&'a mut [f32]),
    I32(&'a mut [i32]),
}

pub(crate) type Runner = dyn Fn(&[TensorView<'_>], TensorViewMut<'_>, &mut [f32]) -> Result<()> + Send + Sync;

/// A unit bound to concrete parameters, status and shapes: ready to run
/// natively, or to be emitted as a call with a literal geometry.
pub struct BoundCall {
    pub template_id: &'static str,
    pub scratch_len: usize,
    /// Rust expression constructing the template's `Geometry`.
    pub geometry_literal: String,
    runner: Box<Runner>,
}

impl BoundCall {
    pub(crate) fn new(
        template_id: &'static str,
        scratch_len: usize,
        geometry_literal: String,
        runner: Box<Runner>,
    ) -> Self {
        Self {
            template_id,
            scratch_len,
            geometry_literal,
            runner,
        }
    }

    pub fn run(&self, inputs: &[TensorView<'_>], output: TensorViewMut<'_>, scratch: &mut [f32]) -> Result<()> {
        (self.runner)(inputs, output, scratch)
    }
}

impl fmt::Debug for BoundCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundCall")
            .field("template_id", &self.template_id)
            .field("scratch_len", &self.scratch_len)
            .field("geometry", &self.geometry_literal)
            .finish()
    }
}

/// Prepare/bind behaviour of one unit.
pub trait UnitKernel: Send + Sync + fmt::Debug {
    /// Output shape for the given inputs.
    fn prepare(&self, params: &ParamRecord, inputs: &[&[usize]]) -> Result<Vec<usize>>;

    fn bind(
        &self,
        params: &ParamRecord,
        status: &OpStatus,
        inputs: &[&[usize]],
        output: &[usize],
        device: &DeviceInfo,
    ) -> Result<BoundCall>;
}

#[derive(Debug, Clone)]
pub struct ComputingUnit {
    pub key: UnitKey,
    pub param_schema: Vec<ParamField>,
    pub status_schema: Vec<StatusSlot>,
    pub template_id: &'static str,
    pub kernel: Arc<dyn UnitKernel>,
}

impl ComputingUnit {
    pub fn prepare(&self, params: &ParamRecord, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        self.kernel.prepare(params, inputs)
    }

    pub fn bind(
        &self,
        params: &ParamRecord,
        status: &OpStatus,
        inputs: &[&[usize]],
        output: &[usize],
        device: &DeviceInfo,
    ) -> Result<BoundCall> {
        for slot in &self.status_schema {
            if !status.contains_key(slot.name) {
                return Err(KernelError::MissingStatus(slot.name.to_string()));
            }
        }
        let expected = self.kernel.prepare(params, inputs)?;
        if expected != output {
            return Err(KernelError::Shape(format!(
                "output buffer {output:?} does not match prepared {expected:?}"
            )));
        }
        self.kernel.bind(params, status, inputs, output, device)
    }
}

/// Bind and run a unit once with freshly allocated scratch.
pub fn eval(
    unit: &ComputingUnit,
    params: &ParamRecord,
    status: &OpStatus,
    inputs: &[(TensorView<'_>, &[usize])],
    output: TensorViewMut<'_>,
    output_shape: &[usize],
    device: &DeviceInfo,
) -> Result<()> {
    let shapes: Vec<&[usize]> = inputs.iter().map(|(_, s)| *s).collect();
    let call = unit.bind(params, status, &shapes, output_shape, device)?;
    let mut scratch = vec![0.0f32; call.scratch_len];
    let views: Vec<TensorView<'_>> = inputs.iter().map(|(v, _)| *v).collect();
    call.run(&views, output, &mut scratch)
}

/// Source text of every template, keyed by template id.
pub const TEMPLATES: &[(&str, &str)] = &[
    ("add_i32_ref", include_str!("units/add_i32_ref.rs")),
    ("add_ref", include_str!("units/add_ref.rs")),
    ("average_pool2d_ref", include_str!("units/average_pool2d_ref.rs")),
    ("concatenation_ref", include_str!("units/concatenation_ref.rs")),
    ("conv2d_ref", include_str!("units/conv2d_ref.rs")),
    ("conv2d_tiled", include_str!("units/conv2d_tiled.rs")),
    ("depthwise_conv2d_ref", include_str!("units/depthwise_conv2d_ref.rs")),
    ("fully_connected_ref", include_str!("units/fully_connected_ref.rs")),
    ("fully_connected_tiled", include_str!("units/fully_connected_tiled.rs")),
    ("max_pool2d_ref", include_str!("units/max_pool2d_ref.rs")),
    ("pad_ref", include_str!("units/pad_ref.rs")),
    ("relu_ref", include_str!("units/relu_ref.rs")),
    ("reshape_ref", include_str!("units/reshape_ref.rs")),
    ("scale_shift_ref", include_str!("units/scale_shift_ref.rs")),
    ("softmax_ref", include_str!("units/softmax_ref.rs")),
];

pub fn template_source(template_id: &str) -> Option<&'static str> {
    TEMPLATES.iter().find(|(id, _)| *id == template_id).map(|(_, src)| *src)
}

/// Operator registry: unique `(op, dtype, variant)` keys to computing units.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    units: BTreeMap<UnitKey, ComputingUnit>,
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The full builtin unit set plus the sample custom unit.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        for unit in adapters::builtin_units() {
            let key = unit.key.clone();
            match key.op {
                OpId::Custom(ref name) => reg.register_custom(name, unit),
                OpId::Builtin(_) => reg.register_builtin(key, unit),
            }
            .expect("builtin units are unique");
        }
        reg
    }

    pub fn register_builtin(&mut self, key: UnitKey, mut unit: ComputingUnit) -> Result<()> {
        if self.units.contains_key(&key) {
            return Err(KernelError::Duplicate(key));
        }
        unit.key = key.clone();
        self.units.insert(key, unit);
        Ok(())
    }

    pub fn register_custom(&mut self, name: &str, unit: ComputingUnit) -> Result<()> {
        let key = UnitKey::new(OpId::custom(name), unit.key.dtype, unit.key.variant);
        self.register_builtin(key, unit)
    }

    pub fn get(&self, key: &UnitKey) -> Option<&ComputingUnit> {
        self.units.get(key)
    }

    pub fn units(&self) -> impl Iterator<Item = &ComputingUnit> {
        self.units.values()
    }

    /// Selects the unit for an operator: the tiled variant when the device has
    /// more than one thread and one exists, the reference variant otherwise.
    pub fn lookup(&self, op: &OpId, dtype: DataType, device: &DeviceInfo) -> Result<&ComputingUnit> {
        if device.threads > 1 {
            if let Some(unit) = self.get(&UnitKey::new(op.clone(), dtype, Variant::Tiled)) {
                return Ok(unit);
            }
        }
        if let Some(unit) = self.get(&UnitKey::new(op.clone(), dtype, Variant::Reference)) {
            return Ok(unit);
        }
        if self.units.keys().any(|k| &k.op == op) {
            Err(KernelError::UnsupportedDtype { op: op.clone(), dtype })
        } else {
            Err(KernelError::UnsupportedOp(op.clone()))
        }
    }
}

/// Builtin table: every builtin in F32, plus I32 for ADD and RESHAPE.
pub fn expected_builtin_pairs() -> Vec<(OpId, DataType)> {
    let mut pairs: Vec<(OpId, DataType)> = BuiltinOp::ALL
        .iter()
        .map(|op| (OpId::builtin(*op), DataType::F32))
        .collect();
    pairs.push((OpId::builtin(BuiltinOp::Add), DataType::I32));
    pairs.push((OpId::builtin(BuiltinOp::Reshape), DataType::I32));
    pairs.push((OpId::custom(SCALE_SHIFT), DataType::F32));
    pairs
}
