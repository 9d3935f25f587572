//! On-device model container: computational graph, weight store, parsing,
//! validation and static shape inference.
//!
//! A bundle is a pair of files. The graph description (`.mlg`) is UTF-8 JSON;
//! the weights (`.mlw`) are a little-endian binary blob. See [`format`] for the
//! byte layout.

pub mod format;
pub mod shapes;
pub mod summary;
pub mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use format::{load_bundle, save_bundle, WEIGHTS_MAGIC};
pub use shapes::{infer_shapes, ShapeMap};
pub use summary::summarize;
pub use validate::{validate, ValidationReport, Violation};

/// Current graph format version.
pub const FORMAT_VERSION: u32 = 1;

/// Largest element count a single tensor may hold.
pub const MAX_ELEMENTS: usize = (1 << 31) - 1;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed graph: {0}")]
    Json(#[from] serde_json::Error),
    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("bad magic in weights blob")]
    BadMagic,
    #[error("truncated weight entry")]
    Truncated,
    #[error("malformed weights blob: {0}")]
    MalformedWeights(String),
    #[error("invalid bundle: {0}")]
    Invalid(ValidationReport),
    #[error("shape error at operator {op_index}: {message}")]
    Shape { op_index: usize, message: String },
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Scalar element type of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DataType {
    F32,
    I32,
}

impl DataType {
    pub fn code(self) -> u8 {
        match self {
            DataType::F32 => 0,
            DataType::I32 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DataType::F32),
            2 => Some(DataType::I32),
            _ => None,
        }
    }

    pub fn byte_width(self) -> usize {
        4
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataType::F32 => f.write_str("F32"),
            DataType::I32 => f.write_str("I32"),
        }
    }
}

/// Builtin operator codes. Values are normative and stored verbatim in `.mlg` files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u32)]
pub enum BuiltinOp {
    Add = 0,
    AveragePool2d = 1,
    Concatenation = 2,
    Conv2d = 3,
    DepthwiseConv2d = 4,
    FullyConnected = 9,
    MaxPool2d = 17,
    Relu = 19,
    Reshape = 22,
    Softmax = 25,
    Pad = 34,
}

impl BuiltinOp {
    pub const ALL: [BuiltinOp; 11] = [
        BuiltinOp::Add,
        BuiltinOp::AveragePool2d,
        BuiltinOp::Concatenation,
        BuiltinOp::Conv2d,
        BuiltinOp::DepthwiseConv2d,
        BuiltinOp::FullyConnected,
        BuiltinOp::MaxPool2d,
        BuiltinOp::Relu,
        BuiltinOp::Reshape,
        BuiltinOp::Softmax,
        BuiltinOp::Pad,
    ];

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            BuiltinOp::Add => "ADD",
            BuiltinOp::AveragePool2d => "AVERAGE_POOL_2D",
            BuiltinOp::Concatenation => "CONCATENATION",
            BuiltinOp::Conv2d => "CONV_2D",
            BuiltinOp::DepthwiseConv2d => "DEPTHWISE_CONV_2D",
            BuiltinOp::FullyConnected => "FULLY_CONNECTED",
            BuiltinOp::MaxPool2d => "MAX_POOL_2D",
            BuiltinOp::Relu => "RELU",
            BuiltinOp::Reshape => "RESHAPE",
            BuiltinOp::Softmax => "SOFTMAX",
            BuiltinOp::Pad => "PAD",
        }
    }
}

/// Name of the sample custom operator shipped with the kernel library.
pub const SCALE_SHIFT: &str = "SCALE_SHIFT";

/// Operator identity: a builtin opcode or a custom operator name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpId {
    Builtin(u32),
    Custom(String),
}

impl OpId {
    pub fn builtin(op: BuiltinOp) -> Self {
        OpId::Builtin(op.code())
    }

    pub fn custom(name: impl Into<String>) -> Self {
        OpId::Custom(name.into())
    }

    pub fn as_builtin(&self) -> Option<BuiltinOp> {
        match self {
            OpId::Builtin(code) => BuiltinOp::from_code(*code),
            OpId::Custom(_) => None,
        }
    }

    /// Display name: the builtin name for known opcodes, the custom name otherwise.
    pub fn name(&self) -> String {
        match self {
            OpId::Builtin(code) => BuiltinOp::from_code(*code)
                .map(|op| op.name().to_string())
                .unwrap_or_else(|| format!("UNKNOWN_{code}")),
            OpId::Custom(name) => name.clone(),
        }
    }
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpId::Builtin(code) => write!(f, "{}({code})", self.name()),
            OpId::Custom(name) => write!(f, "custom:{name}"),
        }
    }
}

/// A builtin-options value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OptionValue {
    Int(i64),
    Float(f64),
    Str(String),
    IntList(Vec<i64>),
    FloatList(Vec<f64>),
}

impl OptionValue {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            OptionValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            OptionValue::Float(v) => Some(*v),
            OptionValue::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            OptionValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int_list(&self) -> Option<&[i64]> {
        match self {
            OptionValue::IntList(v) => Some(v),
            _ => None,
        }
    }
}

impl From<i64> for OptionValue {
    fn from(v: i64) -> Self {
        OptionValue::Int(v)
    }
}

impl From<f64> for OptionValue {
    fn from(v: f64) -> Self {
        OptionValue::Float(v)
    }
}

impl From<&str> for OptionValue {
    fn from(v: &str) -> Self {
        OptionValue::Str(v.to_string())
    }
}

impl From<Vec<i64>> for OptionValue {
    fn from(v: Vec<i64>) -> Self {
        OptionValue::IntList(v)
    }
}

pub type Options = BTreeMap<String, OptionValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorSpec {
    pub id: usize,
    pub name: String,
    pub dtype: DataType,
    pub shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_ref: Option<u32>,
}

impl TensorSpec {
    pub fn elements(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorRepr", into = "OperatorRepr")]
pub struct OperatorNode {
    pub op: OpId,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    pub options: Options,
}

impl OperatorNode {
    pub fn new(op: OpId, inputs: Vec<usize>, outputs: Vec<usize>) -> Self {
        Self {
            op,
            inputs,
            outputs,
            options: Options::new(),
        }
    }

    pub fn with_option(mut self, key: &str, value: impl Into<OptionValue>) -> Self {
        self.options.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    opcode: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    custom_name: Option<String>,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    #[serde(default)]
    options: Options,
}

impl TryFrom<OperatorRepr> for OperatorNode {
    type Error = String;

    fn try_from(repr: OperatorRepr) -> std::result::Result<Self, Self::Error> {
        let op = match (repr.opcode, repr.custom_name) {
            (Some(code), None) => OpId::Builtin(code),
            (None, Some(name)) => OpId::Custom(name),
            _ => return Err("exactly one of opcode/custom_name is required".to_string()),
        };
        Ok(OperatorNode {
            op,
            inputs: repr.inputs,
            outputs: repr.outputs,
            options: repr.options,
        })
    }
}

impl From<OperatorNode> for OperatorRepr {
    fn from(node: OperatorNode) -> Self {
        let (opcode, custom_name) = match node.op {
            OpId::Builtin(code) => (Some(code), None),
            OpId::Custom(name) => (None, Some(name)),
        };
        OperatorRepr {
            opcode,
            custom_name,
            inputs: node.inputs,
            outputs: node.outputs,
            options: node.options,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputationalGraph {
    pub version: u32,
    pub tensors: Vec<TensorSpec>,
    pub operators: Vec<OperatorNode>,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
}

impl ComputationalGraph {
    pub fn tensor(&self, id: usize) -> Option<&TensorSpec> {
        self.tensors
            .get(id)
            .filter(|t| t.id == id)
            .or_else(|| self.tensors.iter().find(|t| t.id == id))
    }

    pub fn is_weight(&self, id: usize) -> bool {
        self.tensor(id).is_some_and(|t| t.weight_ref.is_some())
    }
}

/// One weight entry: dtype, shape and raw little-endian bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightEntry {
    pub dtype: DataType,
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

impl WeightEntry {
    pub fn from_f32(shape: Vec<usize>, values: &[f32]) -> Self {
        Self {
            dtype: DataType::F32,
            shape,
            data: values.iter().flat_map(|v| v.to_le_bytes()).collect(),
        }
    }

    pub fn from_i32(shape: Vec<usize>, values: &[i32]) -> Self {
        Self {
            dtype: DataType::I32,
            shape,
            data: values.iter().flat_map(|v| v.to_le_bytes()).collect(),
        }
    }

    pub fn elements(&self) -> usize {
        self.shape.iter().product()
    }

    /// Raw 32-bit words, in element order.
    pub fn words(&self) -> Vec<u32> {
        self.data
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.words().into_iter().map(f32::from_bits).collect()
    }

    pub fn to_i32(&self) -> Vec<i32> {
        self.words().into_iter().map(|w| w as i32).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    pub entries: BTreeMap<u32, WeightEntry>,
}

impl WeightStore {
    pub fn get(&self, key: u32) -> Option<&WeightEntry> {
        self.entries.get(&key)
    }

    pub fn insert(&mut self, key: u32, entry: WeightEntry) {
        self.entries.insert(key, entry);
    }
}

/// A computational graph together with its trained weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub graph: ComputationalGraph,
    pub weights: WeightStore,
}
