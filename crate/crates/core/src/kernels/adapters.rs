// Binding of the template kernels to the registry: shape preparation, status
// parsing, geometry construction and the Rust literal of each geometry.

use std::sync::Arc;

use super::params::{ConvParams, ParamRecord, PoolParams};
use super::units;
use super::{
    BoundCall, ComputingUnit, DeviceInfo, KernelError, OpStatus, ParamField, Result, Runner, StatusScope, StatusSlot,
    TensorView, TensorViewMut, UnitKernel, UnitKey, Variant, DEFAULT_K_TILE,
};
use crate::graph::{BuiltinOp, DataType, OpId, SCALE_SHIFT};

/// Rust source text of a geometry field value.
pub(crate) trait Literal {
    fn literal(&self) -> String;
}

impl Literal for usize {
    fn literal(&self) -> String {
        self.to_string()
    }
}

impl Literal for u8 {
    fn literal(&self) -> String {
        self.to_string()
    }
}

impl Literal for i32 {
    fn literal(&self) -> String {
        self.to_string()
    }
}

impl Literal for bool {
    fn literal(&self) -> String {
        self.to_string()
    }
}

impl Literal for f32 {
    fn literal(&self) -> String {
        format!("f32::from_bits(0x{:08x})", self.to_bits())
    }
}

impl Literal for [usize; 4] {
    fn literal(&self) -> String {
        format!("[{}, {}, {}, {}]", self[0], self[1], self[2], self[3])
    }
}

// Builds a template geometry and its source literal from one field list, so
// the two cannot drift apart.
macro_rules! geometry {
    ($module:ident { $($field:ident : $value:expr),* $(,)? }) => {{
        let g = units::$module::Geometry { $($field: $value),* };
        let fields: Vec<String> = vec![$(format!("{}: {}", stringify!($field), Literal::literal(&g.$field))),*];
        let lit = format!("{}::Geometry {{ {} }}", stringify!($module), fields.join(", "));
        (g, lit)
    }};
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn shape_err(msg: impl Into<String>) -> KernelError {
    KernelError::Shape(msg.into())
}

fn wrong_params() -> KernelError {
    KernelError::Params("parameter record does not match unit".into())
}

fn rank4(shape: &[usize], what: &str) -> Result<[usize; 4]> {
    <[usize; 4]>::try_from(shape).map_err(|_| shape_err(format!("{what} must be rank 4, got {shape:?}")))
}

fn arity(inputs: &[&[usize]], min: usize, max: usize) -> Result<()> {
    if inputs.len() < min || inputs.len() > max {
        return Err(shape_err(format!(
            "expected {min}..={max} inputs, got {}",
            inputs.len()
        )));
    }
    Ok(())
}

fn padded_extent(
    input: usize,
    before: usize,
    after: usize,
    kernel: usize,
    stride: usize,
    dilation: usize,
) -> Result<usize> {
    let effective = (kernel - 1) * dilation + 1;
    let total = input + before + after;
    if effective > total {
        return Err(shape_err(format!(
            "effective kernel {effective} exceeds padded extent {total}"
        )));
    }
    Ok((total - effective) / stride + 1)
}

fn conv_out(conv: &ConvParams, in_h: usize, in_w: usize, k_h: usize, k_w: usize) -> Result<(usize, usize)> {
    Ok((
        padded_extent(in_h, conv.pad_top, conv.pad_bottom, k_h, conv.stride_h, conv.dilation_h)?,
        padded_extent(in_w, conv.pad_left, conv.pad_right, k_w, conv.stride_w, conv.dilation_w)?,
    ))
}

fn check_bias(inputs: &[&[usize]], has_bias: bool, channels: usize) -> Result<()> {
    if has_bias != (inputs.len() == 3) {
        return Err(shape_err("bias presence does not match the parameter record"));
    }
    if has_bias && numel(inputs[2]) != channels {
        return Err(shape_err(format!(
            "bias {:?} does not match {channels} channels",
            inputs[2]
        )));
    }
    Ok(())
}

fn status<'a>(status: &'a OpStatus, name: &str, allowed: &[&str]) -> Result<&'a str> {
    let value = status
        .get(name)
        .ok_or_else(|| KernelError::MissingStatus(name.to_string()))?;
    if !allowed.contains(&value.as_str()) {
        return Err(KernelError::InvalidStatus {
            name: name.to_string(),
            value: value.clone(),
        });
    }
    Ok(value)
}

fn f32_slices<'a>(views: &[TensorView<'a>], lens: &[usize]) -> Result<Vec<&'a [f32]>> {
    if views.len() != lens.len() {
        return Err(shape_err(format!(
            "expected {} inputs, got {}",
            lens.len(),
            views.len()
        )));
    }
    views
        .iter()
        .zip(lens)
        .map(|(v, &len)| match v {
            TensorView::F32(s) if s.len() == len => Ok(*s),
            TensorView::F32(s) => Err(shape_err(format!("input holds {} values, expected {len}", s.len()))),
            TensorView::I32(_) => Err(KernelError::DtypeMismatch("f32")),
        })
        .collect()
}

fn i32_slices<'a>(views: &[TensorView<'a>], lens: &[usize]) -> Result<Vec<&'a [i32]>> {
    if views.len() != lens.len() {
        return Err(shape_err(format!(
            "expected {} inputs, got {}",
            lens.len(),
            views.len()
        )));
    }
    views
        .iter()
        .zip(lens)
        .map(|(v, &len)| match v {
            TensorView::I32(s) if s.len() == len => Ok(*s),
            TensorView::I32(s) => Err(shape_err(format!("input holds {} values, expected {len}", s.len()))),
            TensorView::F32(_) => Err(KernelError::DtypeMismatch("i32")),
        })
        .collect()
}

fn f32_runner<F>(lens: Vec<usize>, out_len: usize, scratch_len: usize, f: F) -> Box<Runner>
where
    F: Fn(&[&[f32]], &mut [f32], &mut [f32]) + Send + Sync + 'static,
{
    Box::new(move |views, out, scratch| {
        let ins = f32_slices(views, &lens)?;
        let TensorViewMut::F32(out) = out else {
            return Err(KernelError::DtypeMismatch("f32"));
        };
        if out.len() != out_len {
            return Err(shape_err(format!(
                "output holds {} values, expected {out_len}",
                out.len()
            )));
        }
        if scratch.len() < scratch_len {
            return Err(shape_err(format!(
                "scratch holds {} values, needs {scratch_len}",
                scratch.len()
            )));
        }
        f(&ins, out, scratch);
        Ok(())
    })
}

fn i32_runner<F>(lens: Vec<usize>, out_len: usize, f: F) -> Box<Runner>
where
    F: Fn(&[&[i32]], &mut [i32], &mut [f32]) + Send + Sync + 'static,
{
    Box::new(move |views, out, scratch| {
        let ins = i32_slices(views, &lens)?;
        let TensorViewMut::I32(out) = out else {
            return Err(KernelError::DtypeMismatch("i32"));
        };
        if out.len() != out_len {
            return Err(shape_err(format!(
                "output holds {} values, expected {out_len}",
                out.len()
            )));
        }
        f(&ins, out, scratch);
        Ok(())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Conv2dRef,
    Conv2dTiled,
    Depthwise,
    MaxPool,
    AvgPool,
    FcRef,
    FcTiled,
    Softmax,
    Relu,
    Reshape(DataType),
    Concat(DataType),
    Add,
    AddI32,
    Pad,
    ScaleShift,
}

#[derive(Debug)]
struct Adapter {
    kind: Kind,
}

// Domain order is search order.
const FC_LAYOUTS: &[&str] = &["transposed", "row_major"];
const CONV_LAYOUTS: &[&str] = &["HWIO", "OHWI"];
const BOOLS: &[&str] = &["true", "false"];

impl Adapter {
    fn conv_shape(&self, conv: &ConvParams, has_bias: bool, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        arity(inputs, 2, 3)?;
        let [n, h, w, c] = rank4(inputs[0], "input")?;
        let [o, kh, kw, i] = rank4(inputs[1], "filter")?;
        if i != c {
            return Err(shape_err(format!("filter channels {i} != input channels {c}")));
        }
        check_bias(inputs, has_bias, o)?;
        let (oh, ow) = conv_out(conv, h, w, kh, kw)?;
        Ok(vec![n, oh, ow, o])
    }

    fn depthwise_shape(&self, conv: &ConvParams, m: usize, has_bias: bool, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        arity(inputs, 2, 3)?;
        let [n, h, w, c] = rank4(inputs[0], "input")?;
        let [one, kh, kw, oc] = rank4(inputs[1], "filter")?;
        if one != 1 || oc != c * m {
            return Err(shape_err(format!(
                "depthwise filter {:?} does not match {c} channels x multiplier {m}",
                inputs[1]
            )));
        }
        check_bias(inputs, has_bias, oc)?;
        let (oh, ow) = conv_out(conv, h, w, kh, kw)?;
        Ok(vec![n, oh, ow, oc])
    }

    fn pool_shape(&self, p: &PoolParams, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        arity(inputs, 1, 1)?;
        let [n, h, w, c] = rank4(inputs[0], "input")?;
        let oh = padded_extent(h, p.pad_top, p.pad_bottom, p.filter_h, p.stride_h, 1)?;
        let ow = padded_extent(w, p.pad_left, p.pad_right, p.filter_w, p.stride_w, 1)?;
        Ok(vec![n, oh, ow, c])
    }

    fn fc_shape(&self, has_bias: bool, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        arity(inputs, 2, 3)?;
        let [units, depth] = <[usize; 2]>::try_from(inputs[1])
            .map_err(|_| shape_err(format!("weights must be rank 2, got {:?}", inputs[1])))?;
        let elements = numel(inputs[0]);
        if depth == 0 || elements % depth != 0 {
            return Err(shape_err(format!(
                "input {:?} is not divisible into rows of {depth}",
                inputs[0]
            )));
        }
        check_bias(inputs, has_bias, units)?;
        Ok(vec![elements / depth, units])
    }
}

impl UnitKernel for Adapter {
    fn prepare(&self, params: &ParamRecord, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        match (self.kind, params) {
            (Kind::Conv2dRef | Kind::Conv2dTiled, ParamRecord::Conv2d { conv, has_bias }) => {
                self.conv_shape(conv, *has_bias, inputs)
            }
            (
                Kind::Depthwise,
                ParamRecord::DepthwiseConv2d {
                    conv,
                    depth_multiplier,
                    has_bias,
                },
            ) => self.depthwise_shape(conv, *depth_multiplier, *has_bias, inputs),
            (Kind::MaxPool | Kind::AvgPool, ParamRecord::Pool(p)) => self.pool_shape(p, inputs),
            (Kind::FcRef | Kind::FcTiled, ParamRecord::FullyConnected { has_bias, .. }) => {
                self.fc_shape(*has_bias, inputs)
            }
            (Kind::Softmax, ParamRecord::Softmax { .. })
            | (Kind::Relu, ParamRecord::Relu)
            | (Kind::ScaleShift, ParamRecord::ScaleShift { .. }) => {
                arity(inputs, 1, 1)?;
                Ok(inputs[0].to_vec())
            }
            (Kind::Reshape(_), ParamRecord::Reshape { new_shape }) => {
                arity(inputs, 1, 1)?;
                let (before, after) = (numel(inputs[0]), numel(new_shape));
                if before != after {
                    return Err(shape_err(format!("element count mismatch: {before} vs {after}")));
                }
                Ok(new_shape.clone())
            }
            (Kind::Concat(_), ParamRecord::Concatenation { axis }) => {
                if inputs.is_empty() {
                    return Err(shape_err("concatenation needs at least one input"));
                }
                let first = inputs[0];
                if *axis >= first.len() {
                    return Err(shape_err(format!("axis {axis} out of range for {first:?}")));
                }
                let mut out = first.to_vec();
                for s in &inputs[1..] {
                    let compatible = s.len() == first.len()
                        && s.iter().zip(first).enumerate().all(|(i, (a, b))| i == *axis || a == b);
                    if !compatible {
                        return Err(shape_err(format!(
                            "incompatible concatenation shapes {first:?} and {s:?}"
                        )));
                    }
                    out[*axis] += s[*axis];
                }
                Ok(out)
            }
            (Kind::Add | Kind::AddI32, ParamRecord::Add { .. }) => {
                arity(inputs, 2, 2)?;
                if inputs[0] != inputs[1] {
                    return Err(shape_err(format!("shape mismatch {:?} vs {:?}", inputs[0], inputs[1])));
                }
                Ok(inputs[0].to_vec())
            }
            (Kind::Pad, ParamRecord::Pad { paddings }) => {
                arity(inputs, 1, 1)?;
                let input = inputs[0];
                if input.len() > 4 || paddings.len() != 2 * input.len() {
                    return Err(shape_err(format!(
                        "paddings {paddings:?} do not fit rank {} (at most 4)",
                        input.len()
                    )));
                }
                Ok(input
                    .iter()
                    .enumerate()
                    .map(|(i, d)| d + paddings[2 * i] + paddings[2 * i + 1])
                    .collect())
            }
            _ => Err(wrong_params()),
        }
    }

    fn bind(
        &self,
        params: &ParamRecord,
        st: &OpStatus,
        inputs: &[&[usize]],
        output: &[usize],
        device: &DeviceInfo,
    ) -> Result<BoundCall> {
        let lens: Vec<usize> = inputs.iter().map(|s| numel(s)).collect();
        let out_len = numel(output);
        let threads = device.threads.max(1);
        let call = match (self.kind, params) {
            (Kind::Conv2dRef, ParamRecord::Conv2d { conv, has_bias }) => {
                let layout = match status(st, "weights_layout", CONV_LAYOUTS)? {
                    "OHWI" => units::conv2d_ref::LAYOUT_OHWI,
                    _ => units::conv2d_ref::LAYOUT_HWIO,
                };
                let [batch, in_h, in_w, in_c] = rank4(inputs[0], "input")?;
                let [out_c, k_h, k_w, _] = rank4(inputs[1], "filter")?;
                let (g, lit) = geometry!(conv2d_ref {
                    batch: batch,
                    in_h: in_h,
                    in_w: in_w,
                    in_c: in_c,
                    out_h: output[1],
                    out_w: output[2],
                    out_c: out_c,
                    k_h: k_h,
                    k_w: k_w,
                    stride_h: conv.stride_h,
                    stride_w: conv.stride_w,
                    dilation_h: conv.dilation_h,
                    dilation_w: conv.dilation_w,
                    pad_top: conv.pad_top,
                    pad_left: conv.pad_left,
                    act_min: conv.act.min,
                    act_max: conv.act.max,
                    has_bias: *has_bias,
                    filter_layout: layout,
                });
                let scratch = units::conv2d_ref::scratch_len(&g);
                BoundCall::new(
                    "conv2d_ref",
                    scratch,
                    lit,
                    f32_runner(lens, out_len, scratch, move |i, o, s| {
                        units::conv2d_ref::run(&g, i, o, s)
                    }),
                )
            }
            (Kind::Conv2dTiled, ParamRecord::Conv2d { conv, has_bias }) => {
                let im2col = status(st, "im2col", BOOLS)? == "true";
                let [batch, in_h, in_w, in_c] = rank4(inputs[0], "input")?;
                let [out_c, k_h, k_w, _] = rank4(inputs[1], "filter")?;
                let (g, lit) = geometry!(conv2d_tiled {
                    batch: batch,
                    in_h: in_h,
                    in_w: in_w,
                    in_c: in_c,
                    out_h: output[1],
                    out_w: output[2],
                    out_c: out_c,
                    k_h: k_h,
                    k_w: k_w,
                    stride_h: conv.stride_h,
                    stride_w: conv.stride_w,
                    dilation_h: conv.dilation_h,
                    dilation_w: conv.dilation_w,
                    pad_top: conv.pad_top,
                    pad_left: conv.pad_left,
                    act_min: conv.act.min,
                    act_max: conv.act.max,
                    has_bias: *has_bias,
                    im2col: im2col,
                    threads: threads,
                    k_tile: DEFAULT_K_TILE,
                });
                if !units::conv2d_tiled::supports(&g) {
                    return Err(KernelError::UnsupportedStatusCombination(
                        "im2col=false requires a 1x1 unit-stride filter without padding".into(),
                    ));
                }
                let scratch = units::conv2d_tiled::scratch_len(&g);
                BoundCall::new(
                    "conv2d_tiled",
                    scratch,
                    lit,
                    f32_runner(lens, out_len, scratch, move |i, o, s| {
                        units::conv2d_tiled::run(&g, i, o, s)
                    }),
                )
            }
            (
                Kind::Depthwise,
                ParamRecord::DepthwiseConv2d {
                    conv,
                    depth_multiplier,
                    has_bias,
                },
            ) => {
                let [batch, in_h, in_w, in_c] = rank4(inputs[0], "input")?;
                let [_, k_h, k_w, _] = rank4(inputs[1], "filter")?;
                let (g, lit) = geometry!(depthwise_conv2d_ref {
                    batch: batch,
                    in_h: in_h,
                    in_w: in_w,
                    in_c: in_c,
                    out_h: output[1],
                    out_w: output[2],
                    depth_multiplier: *depth_multiplier,
                    k_h: k_h,
                    k_w: k_w,
                    stride_h: conv.stride_h,
                    stride_w: conv.stride_w,
                    dilation_h: conv.dilation_h,
                    dilation_w: conv.dilation_w,
                    pad_top: conv.pad_top,
                    pad_left: conv.pad_left,
                    act_min: conv.act.min,
                    act_max: conv.act.max,
                    has_bias: *has_bias,
                });
                let scratch = units::depthwise_conv2d_ref::scratch_len(&g);
                BoundCall::new(
                    "depthwise_conv2d_ref",
                    scratch,
                    lit,
                    f32_runner(lens, out_len, scratch, move |i, o, s| {
                        units::depthwise_conv2d_ref::run(&g, i, o, s)
                    }),
                )
            }
            (Kind::MaxPool, ParamRecord::Pool(p)) => {
                let [batch, in_h, in_w, channels] = rank4(inputs[0], "input")?;
                let (g, lit) = geometry!(max_pool2d_ref {
                    batch: batch,
                    in_h: in_h,
                    in_w: in_w,
                    channels: channels,
                    out_h: output[1],
                    out_w: output[2],
                    filter_h: p.filter_h,
                    filter_w: p.filter_w,
                    stride_h: p.stride_h,
                    stride_w: p.stride_w,
                    pad_top: p.pad_top,
                    pad_left: p.pad_left,
                    act_min: p.act.min,
                    act_max: p.act.max,
                });
                BoundCall::new(
                    "max_pool2d_ref",
                    0,
                    lit,
                    f32_runner(lens, out_len, 0, move |i, o, s| units::max_pool2d_ref::run(&g, i, o, s)),
                )
            }
            (Kind::AvgPool, ParamRecord::Pool(p)) => {
                let [batch, in_h, in_w, channels] = rank4(inputs[0], "input")?;
                let (g, lit) = geometry!(average_pool2d_ref {
                    batch: batch,
                    in_h: in_h,
                    in_w: in_w,
                    channels: channels,
                    out_h: output[1],
                    out_w: output[2],
                    filter_h: p.filter_h,
                    filter_w: p.filter_w,
                    stride_h: p.stride_h,
                    stride_w: p.stride_w,
                    pad_top: p.pad_top,
                    pad_left: p.pad_left,
                    act_min: p.act.min,
                    act_max: p.act.max,
                });
                BoundCall::new(
                    "average_pool2d_ref",
                    0,
                    lit,
                    f32_runner(lens, out_len, 0, move |i, o, s| {
                        units::average_pool2d_ref::run(&g, i, o, s)
                    }),
                )
            }
            (Kind::FcRef, ParamRecord::FullyConnected { act, has_bias }) => {
                let transposed = status(st, "weights_layout", FC_LAYOUTS)? == "transposed";
                let cacheable = status(st, "lhs_cacheable", BOOLS)? == "true";
                let (g, lit) = geometry!(fully_connected_ref {
                    batch: output[0],
                    depth: inputs[1][1],
                    units: inputs[1][0],
                    act_min: act.min,
                    act_max: act.max,
                    has_bias: *has_bias,
                    weights_transposed: transposed,
                    lhs_cacheable: cacheable,
                });
                BoundCall::new(
                    "fully_connected_ref",
                    0,
                    lit,
                    f32_runner(lens, out_len, 0, move |i, o, s| {
                        units::fully_connected_ref::run(&g, i, o, s)
                    }),
                )
            }
            (Kind::FcTiled, ParamRecord::FullyConnected { act, has_bias }) => {
                let transposed = status(st, "weights_layout", FC_LAYOUTS)? == "transposed";
                let cacheable = status(st, "lhs_cacheable", BOOLS)? == "true";
                let (g, lit) = geometry!(fully_connected_tiled {
                    batch: output[0],
                    depth: inputs[1][1],
                    units: inputs[1][0],
                    act_min: act.min,
                    act_max: act.max,
                    has_bias: *has_bias,
                    weights_transposed: transposed,
                    lhs_cacheable: cacheable,
                    threads: threads,
                    k_tile: DEFAULT_K_TILE,
                });
                let scratch = units::fully_connected_tiled::scratch_len(&g);
                BoundCall::new(
                    "fully_connected_tiled",
                    scratch,
                    lit,
                    f32_runner(lens, out_len, scratch, move |i, o, s| {
                        units::fully_connected_tiled::run(&g, i, o, s)
                    }),
                )
            }
            (Kind::Softmax, ParamRecord::Softmax { beta }) => {
                let depth = output.last().copied().unwrap_or(1);
                let (g, lit) = geometry!(softmax_ref {
                    outer: if depth == 0 { 0 } else { out_len / depth },
                    depth: depth,
                    beta: *beta,
                });
                BoundCall::new(
                    "softmax_ref",
                    0,
                    lit,
                    f32_runner(lens, out_len, 0, move |i, o, s| units::softmax_ref::run(&g, i, o, s)),
                )
            }
            (Kind::Relu, ParamRecord::Relu) => {
                let (g, lit) = geometry!(relu_ref { len: out_len });
                BoundCall::new(
                    "relu_ref",
                    0,
                    lit,
                    f32_runner(lens, out_len, 0, move |i, o, s| units::relu_ref::run(&g, i, o, s)),
                )
            }
            (Kind::ScaleShift, ParamRecord::ScaleShift { scale, shift }) => {
                let (g, lit) = geometry!(scale_shift_ref {
                    len: out_len,
                    scale: *scale,
                    shift: *shift
                });
                BoundCall::new(
                    "scale_shift_ref",
                    0,
                    lit,
                    f32_runner(lens, out_len, 0, move |i, o, s| {
                        units::scale_shift_ref::run(&g, i, o, s)
                    }),
                )
            }
            (Kind::Reshape(dtype), ParamRecord::Reshape { .. }) => {
                let (g, lit) = geometry!(reshape_ref { len: out_len });
                let runner = match dtype {
                    DataType::F32 => f32_runner(lens, out_len, 0, move |i, o, s| units::reshape_ref::run(&g, i, o, s)),
                    DataType::I32 => i32_runner(lens, out_len, move |i, o, s| units::reshape_ref::run(&g, i, o, s)),
                };
                BoundCall::new("reshape_ref", 0, lit, runner)
            }
            (Kind::Concat(dtype), ParamRecord::Concatenation { axis }) => {
                let (g, lit) = geometry!(concatenation_ref {
                    outer: numel(&output[..*axis])
                });
                let runner = match dtype {
                    DataType::F32 => f32_runner(lens, out_len, 0, move |i, o, s| {
                        units::concatenation_ref::run(&g, i, o, s)
                    }),
                    DataType::I32 => {
                        i32_runner(lens, out_len, move |i, o, s| units::concatenation_ref::run(&g, i, o, s))
                    }
                };
                BoundCall::new("concatenation_ref", 0, lit, runner)
            }
            (Kind::Add, ParamRecord::Add { act }) => {
                let (g, lit) = geometry!(add_ref {
                    len: out_len,
                    act_min: act.min,
                    act_max: act.max
                });
                BoundCall::new(
                    "add_ref",
                    0,
                    lit,
                    f32_runner(lens, out_len, 0, move |i, o, s| units::add_ref::run(&g, i, o, s)),
                )
            }
            (Kind::AddI32, ParamRecord::Add { act }) => {
                let (g, lit) = geometry!(add_i32_ref {
                    len: out_len,
                    act_min: clamp_i32(act.min),
                    act_max: clamp_i32(act.max),
                });
                BoundCall::new(
                    "add_i32_ref",
                    0,
                    lit,
                    i32_runner(lens, out_len, move |i, o, s| units::add_i32_ref::run(&g, i, o, s)),
                )
            }
            (Kind::Pad, ParamRecord::Pad { paddings }) => {
                let rank = inputs[0].len();
                let lead = 4 - rank;
                let mut in_dims = [1usize; 4];
                let mut before = [0usize; 4];
                let mut out_dims = [1usize; 4];
                for i in 0..rank {
                    in_dims[lead + i] = inputs[0][i];
                    before[lead + i] = paddings[2 * i];
                    out_dims[lead + i] = output[i];
                }
                let (g, lit) = geometry!(pad_ref {
                    in_dims: in_dims,
                    before: before,
                    out_dims: out_dims
                });
                BoundCall::new(
                    "pad_ref",
                    0,
                    lit,
                    f32_runner(lens, out_len, 0, move |i, o, s| units::pad_ref::run(&g, i, o, s)),
                )
            }
            _ => return Err(wrong_params()),
        };
        Ok(call)
    }
}

fn clamp_i32(v: f32) -> i32 {
    if v <= i32::MIN as f32 {
        i32::MIN
    } else if v >= i32::MAX as f32 {
        i32::MAX
    } else {
        v as i32
    }
}

fn unit(
    op: OpId,
    dtype: DataType,
    variant: Variant,
    template_id: &'static str,
    kind: Kind,
    param_schema: &[(&'static str, &'static str)],
    status_schema: Vec<StatusSlot>,
) -> ComputingUnit {
    ComputingUnit {
        key: UnitKey::new(op, dtype, variant),
        param_schema: param_schema
            .iter()
            .map(|&(name, kind)| ParamField { name, kind })
            .collect(),
        status_schema,
        template_id,
        kernel: Arc::new(Adapter { kind }),
    }
}

pub(crate) fn fc_layout_slot() -> StatusSlot {
    StatusSlot {
        name: "weights_layout",
        domain: FC_LAYOUTS.to_vec(),
        scope: StatusScope::Data("fc_weights"),
        value_changing: true,
    }
}

fn fc_cache_slot() -> StatusSlot {
    StatusSlot {
        name: "lhs_cacheable",
        domain: BOOLS.to_vec(),
        scope: StatusScope::Operator,
        value_changing: false,
    }
}

fn conv_layout_slot() -> StatusSlot {
    StatusSlot {
        name: "weights_layout",
        domain: CONV_LAYOUTS.to_vec(),
        scope: StatusScope::Data("conv_filter"),
        value_changing: true,
    }
}

fn im2col_slot() -> StatusSlot {
    StatusSlot {
        name: "im2col",
        domain: BOOLS.to_vec(),
        scope: StatusScope::Operator,
        value_changing: false,
    }
}

const CONV_FIELDS: &[(&str, &str)] = &[
    ("stride_h", "usize"),
    ("stride_w", "usize"),
    ("dilation_h", "usize"),
    ("dilation_w", "usize"),
    ("pad_top", "usize"),
    ("pad_bottom", "usize"),
    ("pad_left", "usize"),
    ("pad_right", "usize"),
    ("act", "clamp"),
    ("has_bias", "bool"),
];

const POOL_FIELDS: &[(&str, &str)] = &[
    ("filter_h", "usize"),
    ("filter_w", "usize"),
    ("stride_h", "usize"),
    ("stride_w", "usize"),
    ("pad_top", "usize"),
    ("pad_bottom", "usize"),
    ("pad_left", "usize"),
    ("pad_right", "usize"),
    ("act", "clamp"),
];

pub(crate) fn builtin_units() -> Vec<ComputingUnit> {
    use BuiltinOp as B;
    use DataType::{F32, I32};
    use Variant::{Reference as R, Tiled as T};
    let b = OpId::builtin;
    let fc_fields: &[(&str, &str)] = &[("act", "clamp"), ("has_bias", "bool")];
    let mut depthwise_fields = CONV_FIELDS.to_vec();
    depthwise_fields.push(("depth_multiplier", "usize"));
    vec![
        unit(b(B::Add), F32, R, "add_ref", Kind::Add, &[("act", "clamp")], vec![]),
        unit(
            b(B::Add),
            I32,
            R,
            "add_i32_ref",
            Kind::AddI32,
            &[("act", "clamp")],
            vec![],
        ),
        unit(
            b(B::AveragePool2d),
            F32,
            R,
            "average_pool2d_ref",
            Kind::AvgPool,
            POOL_FIELDS,
            vec![],
        ),
        unit(
            b(B::Concatenation),
            F32,
            R,
            "concatenation_ref",
            Kind::Concat(F32),
            &[("axis", "usize")],
            vec![],
        ),
        unit(
            b(B::Conv2d),
            F32,
            R,
            "conv2d_ref",
            Kind::Conv2dRef,
            CONV_FIELDS,
            vec![conv_layout_slot()],
        ),
        unit(
            b(B::Conv2d),
            F32,
            T,
            "conv2d_tiled",
            Kind::Conv2dTiled,
            CONV_FIELDS,
            vec![im2col_slot()],
        ),
        unit(
            b(B::DepthwiseConv2d),
            F32,
            R,
            "depthwise_conv2d_ref",
            Kind::Depthwise,
            &depthwise_fields,
            vec![],
        ),
        unit(
            b(B::FullyConnected),
            F32,
            R,
            "fully_connected_ref",
            Kind::FcRef,
            fc_fields,
            vec![fc_layout_slot(), fc_cache_slot()],
        ),
        unit(
            b(B::FullyConnected),
            F32,
            T,
            "fully_connected_tiled",
            Kind::FcTiled,
            fc_fields,
            vec![fc_layout_slot(), fc_cache_slot()],
        ),
        unit(
            b(B::MaxPool2d),
            F32,
            R,
            "max_pool2d_ref",
            Kind::MaxPool,
            POOL_FIELDS,
            vec![],
        ),
        unit(b(B::Relu), F32, R, "relu_ref", Kind::Relu, &[], vec![]),
        unit(
            b(B::Reshape),
            F32,
            R,
            "reshape_ref",
            Kind::Reshape(F32),
            &[("new_shape", "dims")],
            vec![],
        ),
        unit(
            b(B::Reshape),
            I32,
            R,
            "reshape_ref",
            Kind::Reshape(I32),
            &[("new_shape", "dims")],
            vec![],
        ),
        unit(
            b(B::Softmax),
            F32,
            R,
            "softmax_ref",
            Kind::Softmax,
            &[("beta", "f32")],
            vec![],
        ),
        unit(b(B::Pad), F32, R, "pad_ref", Kind::Pad, &[("paddings", "dims")], vec![]),
        unit(
            OpId::custom(SCALE_SHIFT),
            F32,
            R,
            "scale_shift_ref",
            Kind::ScaleShift,
            &[("scale", "f32"), ("shift", "f32")],
            vec![],
        ),
    ]
}
