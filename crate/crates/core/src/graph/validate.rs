use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::{infer_shapes, BuiltinOp, ModelBundle, OpId, OptionValue, MAX_ELEMENTS, SCALE_SHIFT};

/// Expected type of a builtin option.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionKind {
    Int,
    PositiveInt,
    Float,
    Padding,
    Activation,
    IntList,
}

impl OptionKind {
    fn accepts(self, value: &OptionValue) -> bool {
        match self {
            OptionKind::Int => value.as_int().is_some(),
            OptionKind::PositiveInt => value.as_int().is_some_and(|v| v > 0),
            OptionKind::Float => value.as_float().is_some(),
            OptionKind::Padding => matches!(value.as_str(), Some("SAME" | "VALID")),
            OptionKind::Activation => matches!(value.as_str(), Some("NONE" | "RELU" | "RELU6")),
            // An empty JSON list parses as the first list variant.
            OptionKind::IntList => {
                matches!(value, OptionValue::IntList(_)) || matches!(value, OptionValue::FloatList(v) if v.is_empty())
            }
        }
    }
}

const CONV: &[(&str, OptionKind)] = &[
    ("activation", OptionKind::Activation),
    ("dilation_h", OptionKind::PositiveInt),
    ("dilation_w", OptionKind::PositiveInt),
    ("padding", OptionKind::Padding),
    ("stride_h", OptionKind::PositiveInt),
    ("stride_w", OptionKind::PositiveInt),
];

const DEPTHWISE: &[(&str, OptionKind)] = &[
    ("activation", OptionKind::Activation),
    ("depth_multiplier", OptionKind::PositiveInt),
    ("dilation_h", OptionKind::PositiveInt),
    ("dilation_w", OptionKind::PositiveInt),
    ("padding", OptionKind::Padding),
    ("stride_h", OptionKind::PositiveInt),
    ("stride_w", OptionKind::PositiveInt),
];

const POOL: &[(&str, OptionKind)] = &[
    ("activation", OptionKind::Activation),
    ("filter_h", OptionKind::PositiveInt),
    ("filter_w", OptionKind::PositiveInt),
    ("padding", OptionKind::Padding),
    ("stride_h", OptionKind::PositiveInt),
    ("stride_w", OptionKind::PositiveInt),
];

/// Required builtin options for an operator, or `None` for custom operators
/// this crate does not know about.
pub fn option_schema(op: &OpId) -> Option<&'static [(&'static str, OptionKind)]> {
    match op {
        OpId::Builtin(code) => Some(match BuiltinOp::from_code(*code)? {
            BuiltinOp::Conv2d => CONV,
            BuiltinOp::DepthwiseConv2d => DEPTHWISE,
            BuiltinOp::AveragePool2d | BuiltinOp::MaxPool2d => POOL,
            BuiltinOp::FullyConnected | BuiltinOp::Add => &[("activation", OptionKind::Activation)],
            BuiltinOp::Softmax => &[("beta", OptionKind::Float)],
            BuiltinOp::Reshape => &[("new_shape", OptionKind::IntList)],
            BuiltinOp::Concatenation => &[("axis", OptionKind::Int)],
            BuiltinOp::Pad => &[("paddings", OptionKind::IntList)],
            BuiltinOp::Relu => &[],
        }),
        OpId::Custom(name) if name == SCALE_SHIFT => {
            Some(&[("scale", OptionKind::Float), ("shift", OptionKind::Float)])
        }
        OpId::Custom(_) => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateTensorId { id: usize },
    NonContiguousIds { count: usize },
    BadShape { tensor: usize, message: String },
    DanglingWeightRef { tensor: usize, key: u32 },
    WeightMismatch { tensor: usize, message: String },
    UnknownTensor { op_index: Option<usize>, id: usize },
    UnknownOpcode { op_index: usize, code: u32 },
    MissingOption { op_index: usize, key: String },
    UnexpectedOption { op_index: usize, key: String },
    BadOptionValue { op_index: usize, key: String },
    TopologicalOrder { op_index: usize, tensor: usize },
    MultipleProducers { op_index: usize, tensor: usize },
    OutputNotProduced { tensor: usize },
    WeightAsGraphInput { tensor: usize },
    ShapeInference { message: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateTensorId { id } => write!(f, "duplicate tensor id {id}"),
            Violation::NonContiguousIds { count } => {
                write!(f, "tensor ids do not form the range 0..{count}")
            }
            Violation::BadShape { tensor, message } => {
                write!(f, "tensor {tensor}: bad shape: {message}")
            }
            Violation::DanglingWeightRef { tensor, key } => {
                write!(f, "tensor {tensor}: dangling weight_ref {key}")
            }
            Violation::WeightMismatch { tensor, message } => {
                write!(f, "tensor {tensor}: weight mismatch: {message}")
            }
            Violation::UnknownTensor { op_index: Some(op), id } => {
                write!(f, "operator {op}: unknown tensor id {id}")
            }
            Violation::UnknownTensor { op_index: None, id } => {
                write!(f, "graph input/output refers to unknown tensor id {id}")
            }
            Violation::UnknownOpcode { op_index, code } => {
                write!(f, "operator {op_index}: unknown opcode {code}")
            }
            Violation::MissingOption { op_index, key } => {
                write!(f, "operator {op_index}: missing required option: {key}")
            }
            Violation::UnexpectedOption { op_index, key } => {
                write!(f, "operator {op_index}: unexpected option: {key}")
            }
            Violation::BadOptionValue { op_index, key } => {
                write!(f, "operator {op_index}: bad value for option: {key}")
            }
            Violation::TopologicalOrder { op_index, tensor } => write!(
                f,
                "operator {op_index}: topological order violated (tensor {tensor} is not yet available)"
            ),
            Violation::MultipleProducers { op_index, tensor } => {
                write!(f, "operator {op_index}: tensor {tensor} is already defined")
            }
            Violation::OutputNotProduced { tensor } => {
                write!(f, "graph output {tensor} is never produced")
            }
            Violation::WeightAsGraphInput { tensor } => {
                write!(f, "graph input {tensor} is a weight tensor")
            }
            Violation::ShapeInference { message } => write!(f, "shape inference: {message}"),
        }
    }
}

/// Violations found by [`validate`]; empty means the bundle is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

pub fn validate(bundle: &ModelBundle) -> ValidationReport {
    let graph = &bundle.graph;
    let mut out = Vec::new();

    let count = graph.tensors.len();
    let mut seen = BTreeSet::new();
    for t in &graph.tensors {
        if !seen.insert(t.id) {
            out.push(Violation::DuplicateTensorId { id: t.id });
        }
    }
    if seen.len() != count || seen.iter().next_back().is_some_and(|&max| max + 1 != count) {
        out.push(Violation::NonContiguousIds { count });
    }
    let exists = |id: usize| seen.contains(&id);

    for t in &graph.tensors {
        if t.shape.contains(&0) {
            out.push(Violation::BadShape {
                tensor: t.id,
                message: "dimensions must be positive".into(),
            });
        } else if t
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .is_none_or(|n| n > MAX_ELEMENTS)
        {
            out.push(Violation::BadShape {
                tensor: t.id,
                message: "element count exceeds 2^31-1".into(),
            });
        }
        if let Some(key) = t.weight_ref {
            match bundle.weights.get(key) {
                None => out.push(Violation::DanglingWeightRef { tensor: t.id, key }),
                Some(entry) => {
                    if entry.dtype != t.dtype {
                        out.push(Violation::WeightMismatch {
                            tensor: t.id,
                            message: format!("dtype {} vs stored {}", t.dtype, entry.dtype),
                        });
                    }
                    if entry.elements() != t.elements() {
                        out.push(Violation::WeightMismatch {
                            tensor: t.id,
                            message: format!("{} elements vs stored {}", t.elements(), entry.elements()),
                        });
                    }
                }
            }
        }
    }

    for &id in graph.inputs.iter().chain(&graph.outputs) {
        if !exists(id) {
            out.push(Violation::UnknownTensor { op_index: None, id });
        }
    }
    for &id in &graph.inputs {
        if graph.is_weight(id) {
            out.push(Violation::WeightAsGraphInput { tensor: id });
        }
    }

    // Tensors available before the first operator runs.
    let mut available: BTreeSet<usize> = graph.inputs.iter().copied().collect();
    available.extend(graph.tensors.iter().filter(|t| t.weight_ref.is_some()).map(|t| t.id));

    for (op_index, node) in graph.operators.iter().enumerate() {
        if let OpId::Builtin(code) = node.op {
            if BuiltinOp::from_code(code).is_none() {
                out.push(Violation::UnknownOpcode { op_index, code });
            }
        }
        if let Some(schema) = option_schema(&node.op) {
            for (key, kind) in schema {
                match node.options.get(*key) {
                    None => out.push(Violation::MissingOption {
                        op_index,
                        key: key.to_string(),
                    }),
                    Some(v) if !kind.accepts(v) => out.push(Violation::BadOptionValue {
                        op_index,
                        key: key.to_string(),
                    }),
                    Some(_) => {}
                }
            }
            for key in node.options.keys() {
                if !schema.iter().any(|(k, _)| k == key) {
                    out.push(Violation::UnexpectedOption {
                        op_index,
                        key: key.clone(),
                    });
                }
            }
        }
        for &id in &node.inputs {
            if !exists(id) {
                out.push(Violation::UnknownTensor {
                    op_index: Some(op_index),
                    id,
                });
            } else if !available.contains(&id) {
                out.push(Violation::TopologicalOrder { op_index, tensor: id });
            }
        }
        for &id in &node.outputs {
            if !exists(id) {
                out.push(Violation::UnknownTensor {
                    op_index: Some(op_index),
                    id,
                });
            } else if !available.insert(id) {
                out.push(Violation::MultipleProducers { op_index, tensor: id });
            }
        }
    }

    for &id in &graph.outputs {
        if exists(id) && !available.contains(&id) {
            out.push(Violation::OutputNotProduced { tensor: id });
        }
    }

    if out.is_empty() {
        if let Err(e) = infer_shapes(graph) {
            out.push(Violation::ShapeInference { message: e.to_string() });
        }
    }

    ValidationReport { violations: out }
}
