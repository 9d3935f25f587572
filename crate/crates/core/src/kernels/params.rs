//! Known-parameter records: builtin options plus input shapes mapped to the
//! fixed arguments a computing unit needs.

use crate::graph::shapes::spatial_output;
use crate::graph::{BuiltinOp, OpId, OperatorNode, OptionValue, SCALE_SHIFT};

use super::{KernelError, Result};

/// Fused activation clamp bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActRange {
    pub min: f32,
    pub max: f32,
}

impl ActRange {
    pub const NONE: ActRange = ActRange {
        min: f32::NEG_INFINITY,
        max: f32::INFINITY,
    };

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "NONE" => Ok(Self::NONE),
            "RELU" => Ok(ActRange {
                min: 0.0,
                max: f32::INFINITY,
            }),
            "RELU6" => Ok(ActRange { min: 0.0, max: 6.0 }),
            other => Err(KernelError::Params(format!("unknown activation {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvParams {
    pub stride_h: usize,
    pub stride_w: usize,
    pub dilation_h: usize,
    pub dilation_w: usize,
    pub pad_top: usize,
    pub pad_bottom: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub act: ActRange,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolParams {
    pub filter_h: usize,
    pub filter_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub pad_top: usize,
    pub pad_bottom: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub act: ActRange,
}

/// Per-operator known parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamRecord {
    Conv2d {
        conv: ConvParams,
        has_bias: bool,
    },
    DepthwiseConv2d {
        conv: ConvParams,
        depth_multiplier: usize,
        has_bias: bool,
    },
    Pool(PoolParams),
    FullyConnected {
        act: ActRange,
        has_bias: bool,
    },
    Softmax {
        beta: f32,
    },
    Reshape {
        new_shape: Vec<usize>,
    },
    Concatenation {
        axis: usize,
    },
    Add {
        act: ActRange,
    },
    Relu,
    Pad {
        paddings: Vec<usize>,
    },
    ScaleShift {
        scale: f32,
        shift: f32,
    },
}

impl ParamRecord {
    /// Stable textual key; two records are equal exactly when their keys are.
    pub fn canonical(&self) -> String {
        format!("{self:?}")
    }
}

fn missing(key: &str) -> KernelError {
    KernelError::Params(format!("missing required option: {key}"))
}

fn get<'a>(node: &'a OperatorNode, key: &str) -> Result<&'a OptionValue> {
    node.options.get(key).ok_or_else(|| missing(key))
}

fn positive(node: &OperatorNode, key: &str) -> Result<usize> {
    let v = get(node, key)?
        .as_int()
        .ok_or_else(|| KernelError::Params(format!("option {key} must be an integer")))?;
    if v < 0 {
        return Err(KernelError::Params(format!("negative {key}: {v}")));
    }
    if v == 0 {
        return Err(KernelError::Params(format!("{key} must be positive")));
    }
    Ok(v as usize)
}

fn float(node: &OperatorNode, key: &str) -> Result<f32> {
    get(node, key)?
        .as_float()
        .map(|v| v as f32)
        .ok_or_else(|| KernelError::Params(format!("option {key} must be a number")))
}

fn activation(node: &OperatorNode) -> Result<ActRange> {
    let name = get(node, "activation")?
        .as_str()
        .ok_or_else(|| KernelError::Params("option activation must be a string".into()))?;
    ActRange::from_name(name)
}

fn is_same(node: &OperatorNode) -> Result<bool> {
    match get(node, "padding")?.as_str() {
        Some("SAME") => Ok(true),
        Some("VALID") => Ok(false),
        _ => Err(KernelError::Params("unknown padding".into())),
    }
}

/// Leading and trailing padding of one spatial axis.
pub fn axis_padding(input: usize, kernel: usize, stride: usize, dilation: usize, same: bool) -> Result<(usize, usize)> {
    if !same {
        return Ok((0, 0));
    }
    let out = spatial_output(input, kernel, stride, dilation, true).map_err(KernelError::Shape)?;
    let effective = (kernel - 1) * dilation + 1;
    let total = ((out - 1) * stride + effective).saturating_sub(input);
    Ok((total / 2, total - total / 2))
}

fn shape_of<'a>(shapes: &[&'a [usize]], slot: usize, rank: usize) -> Result<&'a [usize]> {
    let s = shapes
        .get(slot)
        .copied()
        .ok_or_else(|| KernelError::Shape(format!("missing input #{slot}")))?;
    if s.len() != rank {
        return Err(KernelError::Shape(format!(
            "input #{slot} must be rank {rank}, got {s:?}"
        )));
    }
    Ok(s)
}

fn conv_params(node: &OperatorNode, shapes: &[&[usize]]) -> Result<ConvParams> {
    let stride_h = positive(node, "stride_h")?;
    let stride_w = positive(node, "stride_w")?;
    let dilation_h = positive(node, "dilation_h")?;
    let dilation_w = positive(node, "dilation_w")?;
    let same = is_same(node)?;
    let act = activation(node)?;
    let input = shape_of(shapes, 0, 4)?;
    let filter = shape_of(shapes, 1, 4)?;
    let (pad_top, pad_bottom) = axis_padding(input[1], filter[1], stride_h, dilation_h, same)?;
    let (pad_left, pad_right) = axis_padding(input[2], filter[2], stride_w, dilation_w, same)?;
    Ok(ConvParams {
        stride_h,
        stride_w,
        dilation_h,
        dilation_w,
        pad_top,
        pad_bottom,
        pad_left,
        pad_right,
        act,
    })
}

/// Builds the known-parameter record of an operator from its options and
/// input shapes.
pub fn map_options_to_params(node: &OperatorNode, shapes: &[&[usize]]) -> Result<ParamRecord> {
    let op = match &node.op {
        OpId::Custom(name) if name == SCALE_SHIFT => {
            return Ok(ParamRecord::ScaleShift {
                scale: float(node, "scale")?,
                shift: float(node, "shift")?,
            })
        }
        OpId::Custom(name) => {
            return Err(KernelError::UnsupportedOp(OpId::custom(name.clone())));
        }
        OpId::Builtin(code) => {
            BuiltinOp::from_code(*code).ok_or_else(|| KernelError::UnsupportedOp(OpId::Builtin(*code)))?
        }
    };
    let has_bias = shapes.len() == 3;
    Ok(match op {
        BuiltinOp::Conv2d => ParamRecord::Conv2d {
            conv: conv_params(node, shapes)?,
            has_bias,
        },
        BuiltinOp::DepthwiseConv2d => ParamRecord::DepthwiseConv2d {
            conv: conv_params(node, shapes)?,
            depth_multiplier: positive(node, "depth_multiplier")?,
            has_bias,
        },
        BuiltinOp::AveragePool2d | BuiltinOp::MaxPool2d => {
            let filter_h = positive(node, "filter_h")?;
            let filter_w = positive(node, "filter_w")?;
            let stride_h = positive(node, "stride_h")?;
            let stride_w = positive(node, "stride_w")?;
            let same = is_same(node)?;
            let act = activation(node)?;
            let input = shape_of(shapes, 0, 4)?;
            let (pad_top, pad_bottom) = axis_padding(input[1], filter_h, stride_h, 1, same)?;
            let (pad_left, pad_right) = axis_padding(input[2], filter_w, stride_w, 1, same)?;
            ParamRecord::Pool(PoolParams {
                filter_h,
                filter_w,
                stride_h,
                stride_w,
                pad_top,
                pad_bottom,
                pad_left,
                pad_right,
                act,
            })
        }
        BuiltinOp::FullyConnected => ParamRecord::FullyConnected {
            act: activation(node)?,
            has_bias,
        },
        BuiltinOp::Softmax => ParamRecord::Softmax {
            beta: float(node, "beta")?,
        },
        BuiltinOp::Reshape => {
            let dims = get(node, "new_shape")?
                .as_int_list()
                .ok_or_else(|| KernelError::Params("option new_shape must be a list".into()))?;
            if let Some(d) = dims.iter().find(|&&d| d <= 0) {
                return Err(KernelError::Params(format!("new_shape dimension {d} is not positive")));
            }
            ParamRecord::Reshape {
                new_shape: dims.iter().map(|&d| d as usize).collect(),
            }
        }
        BuiltinOp::Concatenation => {
            let axis = get(node, "axis")?
                .as_int()
                .ok_or_else(|| KernelError::Params("option axis must be an integer".into()))?;
            let rank = shapes.first().map(|s| s.len()).unwrap_or(0) as i64;
            let resolved = if axis < 0 { axis + rank } else { axis };
            if resolved < 0 || resolved >= rank {
                return Err(KernelError::Params(format!("axis {axis} out of range for rank {rank}")));
            }
            ParamRecord::Concatenation {
                axis: resolved as usize,
            }
        }
        BuiltinOp::Add => ParamRecord::Add { act: activation(node)? },
        BuiltinOp::Relu => ParamRecord::Relu,
        BuiltinOp::Pad => {
            let pads = get(node, "paddings")?;
            let pads: &[i64] = match pads {
                OptionValue::IntList(v) => v,
                OptionValue::FloatList(v) if v.is_empty() => &[],
                _ => return Err(KernelError::Params("option paddings must be a list".into())),
            };
            if let Some(p) = pads.iter().find(|&&p| p < 0) {
                return Err(KernelError::Params(format!("negative padding {p}")));
            }
            ParamRecord::Pad {
                paddings: pads.iter().map(|&p| p as usize).collect(),
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(padding: Option<&str>, stride: i64, act: &str) -> OperatorNode {
        let mut node = OperatorNode::new(OpId::builtin(BuiltinOp::Conv2d), vec![0, 1], vec![2])
            .with_option("stride_h", stride)
            .with_option("stride_w", stride)
            .with_option("dilation_h", 1i64)
            .with_option("dilation_w", 1i64)
            .with_option("activation", act);
        if let Some(p) = padding {
            node = node.with_option("padding", p);
        }
        node
    }

    const IN: &[usize] = &[1, 28, 28, 1];
    const FILTER: &[usize] = &[6, 5, 5, 1];

    #[test]
    fn valid_conv_has_no_padding() {
        let p = map_options_to_params(&conv(Some("VALID"), 1, "RELU"), &[IN, FILTER]).unwrap();
        let ParamRecord::Conv2d { conv, has_bias } = p else {
            panic!()
        };
        assert!(!has_bias);
        assert_eq!(
            (conv.pad_top, conv.pad_bottom, conv.pad_left, conv.pad_right),
            (0, 0, 0, 0)
        );
        assert_eq!(conv.act.min, 0.0);
        assert_eq!(conv.act.max, f32::INFINITY);
    }

    #[test]
    fn same_padding_splits_floor_first() {
        let p = map_options_to_params(&conv(Some("SAME"), 1, "RELU6"), &[IN, FILTER]).unwrap();
        let ParamRecord::Conv2d { conv, .. } = p else { panic!() };
        assert_eq!((conv.pad_top, conv.pad_bottom), (2, 2));
        assert_eq!(conv.act.max, 6.0);
        // in 8, k 4, s 2: out 4, total = 3*2+4-8 = 2
        assert_eq!(axis_padding(8, 4, 2, 1, true).unwrap(), (1, 1));
        // in 7, k 4, s 1: total 3 -> 1 before, 2 after
        assert_eq!(axis_padding(7, 4, 1, 1, true).unwrap(), (1, 2));
    }

    #[test]
    fn missing_padding_is_reported() {
        let e = map_options_to_params(&conv(None, 1, "NONE"), &[IN, FILTER]).unwrap_err();
        assert_eq!(e.to_string(), "missing required option: padding");
    }

    #[test]
    fn bad_activation_and_negative_stride() {
        let e = map_options_to_params(&conv(Some("VALID"), 1, "TANH"), &[IN, FILTER]).unwrap_err();
        assert!(e.to_string().contains("unknown activation"), "{e}");
        let e = map_options_to_params(&conv(Some("VALID"), -1, "NONE"), &[IN, FILTER]).unwrap_err();
        assert!(e.to_string().contains("negative"), "{e}");
    }

    #[test]
    fn canonical_key_separates_records() {
        let a = map_options_to_params(&conv(Some("VALID"), 1, "RELU"), &[IN, FILTER]).unwrap();
        let b = map_options_to_params(&conv(Some("VALID"), 1, "NONE"), &[IN, FILTER]).unwrap();
        assert_ne!(a.canonical(), b.canonical());
        assert_eq!(a.canonical(), a.clone().canonical());
    }
}
