//! Every unit against a naive loop-nest oracle written from the operator
//! definitions, plus variant agreement and status sensitivity. Each check
//! panics on failure.

#![allow(dead_code)]

use modelless::fixtures;
use modelless::graph::{BuiltinOp, DataType, OpId, OperatorNode, OptionValue, SCALE_SHIFT};
use modelless::harness::{output_diff, verification_inputs, VerifyConfig};
use modelless::interpreter::{self, HiddenStatusTable, InterpError, TensorData};
use modelless::kernels::{
    eval, map_options_to_params, DeviceInfo, KernelError, OpStatus, Registry, TensorView, Variant, DEFAULT_K_TILE,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASES: u64 = 30;

/// Reference units against their oracles and tiled units against tolerance.
pub const ORACLE_CHECKS: &[(&str, fn())] = &[
    ("conv2d_reference_matches_oracle", conv2d_reference_matches_oracle),
    ("conv2d_examples", conv2d_examples),
    ("depthwise_reference_matches_oracle", depthwise_reference_matches_oracle),
    ("max_pool_matches_oracle", max_pool_matches_oracle),
    ("average_pool_matches_oracle", average_pool_matches_oracle),
    ("max_pool_lenet_shape", max_pool_lenet_shape),
    (
        "fully_connected_reference_matches_oracle",
        fully_connected_reference_matches_oracle,
    ),
    ("fully_connected_lenet_shape", fully_connected_lenet_shape),
    ("softmax_matches_oracle", softmax_matches_oracle),
    ("elementwise_units_match_oracles", elementwise_units_match_oracles),
    ("integer_units_match_oracles", integer_units_match_oracles),
    ("concatenation_matches_oracle", concatenation_matches_oracle),
    ("pad_matches_oracle", pad_matches_oracle),
    (
        "tiled_conv_within_tolerance_and_thread_independent",
        tiled_conv_within_tolerance_and_thread_independent,
    ),
    (
        "tiled_units_are_bitwise_when_tile_covers_depth",
        tiled_units_are_bitwise_when_tile_covers_depth,
    ),
    (
        "tiled_fc_within_tolerance_and_thread_independent",
        tiled_fc_within_tolerance_and_thread_independent,
    ),
];

// ---------------------------------------------------------------- harness

struct Case {
    op: OpId,
    options: Vec<(&'static str, OptionValue)>,
    inputs: Vec<(Vec<usize>, TensorData)>,
}

#[derive(Debug)]
struct Outcome {
    data: TensorData,
    shape: Vec<usize>,
    variant: Variant,
}

fn run_case(case: &Case, threads: usize, status: Option<OpStatus>) -> Result<Outcome, KernelError> {
    let n = case.inputs.len();
    let mut node = OperatorNode::new(case.op.clone(), (0..n).collect(), vec![n]);
    for (k, v) in &case.options {
        node.options.insert(k.to_string(), v.clone());
    }
    let shapes: Vec<&[usize]> = case.inputs.iter().map(|(s, _)| s.as_slice()).collect();
    let dtype = case.inputs[0].1.dtype();
    let device = DeviceInfo::new(threads);
    let registry = Registry::builtin();
    let unit = registry.lookup(&case.op, dtype, &device)?;
    let params = map_options_to_params(&node, &shapes)?;
    let shape = unit.prepare(&params, &shapes)?;
    let status = match status {
        Some(s) => s,
        None => HiddenStatusTable::default().resolve(unit)?,
    };
    let mut out = TensorData::zeros(dtype, shape.iter().product());
    let views: Vec<(TensorView<'_>, &[usize])> = case.inputs.iter().map(|(s, d)| (d.view(), s.as_slice())).collect();
    eval(unit, &params, &status, &views, out.view_mut(), &shape, &device)?;
    Ok(Outcome {
        data: out,
        shape,
        variant: unit.key.variant,
    })
}

fn f32s(d: &TensorData) -> &[f32] {
    match d {
        TensorData::F32(v) => v,
        TensorData::I32(_) => panic!("expected f32"),
    }
}

fn assert_bits(got: &[f32], want: &[f32], what: &str) {
    assert_eq!(got.len(), want.len(), "{what}: length");
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert_eq!(g.to_bits(), w.to_bits(), "{what}: element {i}: {g} vs {w}");
    }
}

fn max_abs(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

fn act_name(rng: &mut ChaCha8Rng) -> &'static str {
    *["NONE", "RELU", "RELU6"].choose(rng).unwrap()
}

fn clamp_of(act: &str) -> (f32, f32) {
    match act {
        "NONE" => (f32::NEG_INFINITY, f32::INFINITY),
        "RELU" => (0.0, f32::INFINITY),
        _ => (0.0, 6.0),
    }
}

fn clamp(v: f32, act: &str) -> f32 {
    let (lo, hi) = clamp_of(act);
    v.max(lo).min(hi)
}

/// Output extent and leading pad for one spatial axis.
fn axis(input: usize, k: usize, stride: usize, dilation: usize, same: bool) -> (usize, usize) {
    let eff = (k - 1) * dilation + 1;
    if same {
        let out = input.div_ceil(stride);
        let total = ((out - 1) * stride + eff).saturating_sub(input);
        (out, total / 2)
    } else {
        ((input - eff + 1).div_ceil(stride), 0)
    }
}

fn builtin(op: BuiltinOp) -> OpId {
    OpId::builtin(op)
}

// ---------------------------------------------------------------- oracles

struct ConvSpec {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    oc: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    dh: usize,
    dw: usize,
    same: bool,
    act: &'static str,
    bias: bool,
}

fn conv_oracle(s: &ConvSpec, x: &[f32], f: &[f32], b: &[f32]) -> (Vec<f32>, Vec<usize>) {
    let (oh, pt) = axis(s.h, s.kh, s.sh, s.dh, s.same);
    let (ow, pl) = axis(s.w, s.kw, s.sw, s.dw, s.same);
    let mut out = vec![0.0f32; s.n * oh * ow * s.oc];
    for n in 0..s.n {
        for y in 0..oh {
            for xo in 0..ow {
                for o in 0..s.oc {
                    let mut acc = 0.0f32;
                    for i in 0..s.kh {
                        for j in 0..s.kw {
                            let iy = (y * s.sh + i * s.dh) as i64 - pt as i64;
                            let ix = (xo * s.sw + j * s.dw) as i64 - pl as i64;
                            if iy < 0 || ix < 0 || iy >= s.h as i64 || ix >= s.w as i64 {
                                continue;
                            }
                            for c in 0..s.c {
                                let xv = x[((n * s.h + iy as usize) * s.w + ix as usize) * s.c + c];
                                let fv = f[((o * s.kh + i) * s.kw + j) * s.c + c];
                                let p = xv * fv;
                                acc = acc + p;
                            }
                        }
                    }
                    if s.bias {
                        acc = acc + b[o];
                    }
                    out[((n * oh + y) * ow + xo) * s.oc + o] = clamp(acc, s.act);
                }
            }
        }
    }
    (out, vec![s.n, oh, ow, s.oc])
}

fn conv_case(rng: &mut ChaCha8Rng, small_k: bool) -> (Case, ConvSpec, Vec<f32>, Vec<f32>, Vec<f32>) {
    let (kh, kw) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let c = if small_k {
        rng.gen_range(1..=(16 / (kh * kw)).max(1))
    } else {
        rng.gen_range(1..=4)
    };
    let s = ConvSpec {
        n: rng.gen_range(1..=2),
        h: rng.gen_range(kh * 2..=9),
        w: rng.gen_range(kw * 2..=9),
        c,
        oc: rng.gen_range(1..=5),
        kh,
        kw,
        sh: rng.gen_range(1..=2),
        sw: rng.gen_range(1..=2),
        dh: rng.gen_range(1..=2),
        dw: rng.gen_range(1..=2),
        same: rng.gen_bool(0.5),
        act: act_name(rng),
        bias: rng.gen_bool(0.7),
    };
    let x = rand_vec(rng, s.n * s.h * s.w * s.c);
    let f = rand_vec(rng, s.oc * s.kh * s.kw * s.c);
    let b = rand_vec(rng, s.oc);
    let mut inputs = vec![
        (vec![s.n, s.h, s.w, s.c], TensorData::F32(x.clone())),
        (vec![s.oc, s.kh, s.kw, s.c], TensorData::F32(f.clone())),
    ];
    if s.bias {
        inputs.push((vec![s.oc], TensorData::F32(b.clone())));
    }
    let case = Case {
        op: builtin(BuiltinOp::Conv2d),
        options: vec![
            ("stride_h", (s.sh as i64).into()),
            ("stride_w", (s.sw as i64).into()),
            ("dilation_h", (s.dh as i64).into()),
            ("dilation_w", (s.dw as i64).into()),
            ("padding", if s.same { "SAME" } else { "VALID" }.into()),
            ("activation", s.act.into()),
        ],
        inputs,
    };
    (case, s, x, f, b)
}

fn fc_oracle(x: &[f32], w: &[f32], b: Option<&[f32]>, batch: usize, depth: usize, units: usize, act: &str) -> Vec<f32> {
    let mut out = vec![0.0f32; batch * units];
    for r in 0..batch {
        for u in 0..units {
            let mut acc = 0.0f32;
            for k in 0..depth {
                let p = x[r * depth + k] * w[u * depth + k];
                acc = acc + p;
            }
            if let Some(b) = b {
                acc = acc + b[u];
            }
            out[r * units + u] = clamp(acc, act);
        }
    }
    out
}

fn fc_case(rng: &mut ChaCha8Rng, max_depth: usize) -> (Case, Vec<f32>, Vec<usize>) {
    let batch = rng.gen_range(1..=3);
    let depth = rng.gen_range(1..=max_depth);
    let units = rng.gen_range(1..=24);
    let act = act_name(rng);
    let bias = rng.gen_bool(0.7);
    let x = rand_vec(rng, batch * depth);
    let w = rand_vec(rng, units * depth);
    let b = rand_vec(rng, units);
    let want = fc_oracle(&x, &w, bias.then_some(b.as_slice()), batch, depth, units, act);
    let mut inputs = vec![
        (vec![batch, depth], TensorData::F32(x)),
        (vec![units, depth], TensorData::F32(w)),
    ];
    if bias {
        inputs.push((vec![units], TensorData::F32(b)));
    }
    let case = Case {
        op: builtin(BuiltinOp::FullyConnected),
        options: vec![("activation", act.into())],
        inputs,
    };
    (case, want, vec![batch, units])
}

// ---------------------------------------------------------------- reference units

pub fn conv2d_reference_matches_oracle() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (case, s, x, f, b) = conv_case(&mut rng, false);
        let (want, shape) = conv_oracle(&s, &x, &f, &b);
        let got = run_case(&case, 1, None).unwrap();
        assert_eq!(got.variant, Variant::Reference);
        assert_eq!(got.shape, shape, "seed {seed}");
        assert_bits(f32s(&got.data), &want, &format!("conv seed {seed}"));
    }
}

pub fn conv2d_examples() {
    let one = Case {
        op: builtin(BuiltinOp::Conv2d),
        options: vec![
            ("stride_h", 1i64.into()),
            ("stride_w", 1i64.into()),
            ("dilation_h", 1i64.into()),
            ("dilation_w", 1i64.into()),
            ("padding", "VALID".into()),
            ("activation", "NONE".into()),
        ],
        inputs: vec![
            (vec![1, 1, 1, 1], TensorData::F32(vec![2.0])),
            (vec![1, 1, 1, 1], TensorData::F32(vec![3.0])),
            (vec![1], TensorData::F32(vec![1.0])),
        ],
    };
    assert_eq!(f32s(&run_case(&one, 1, None).unwrap().data), [7.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x = rand_vec(&mut rng, 6 * 5);
    let mut centre = vec![0.0f32; 9];
    centre[4] = 1.0;
    let mut identity = Case {
        inputs: vec![
            (vec![1, 6, 5, 1], TensorData::F32(x.clone())),
            (vec![1, 3, 3, 1], TensorData::F32(centre)),
        ],
        ..one
    };
    identity.options[4] = ("padding", "SAME".into());
    let got = run_case(&identity, 1, None).unwrap();
    assert_eq!(got.shape, vec![1, 6, 5, 1]);
    assert_bits(f32s(&got.data), &x, "identity kernel");
}

pub fn depthwise_reference_matches_oracle() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (n, h, w, c) = (
            rng.gen_range(1..=2),
            rng.gen_range(3..=9),
            rng.gen_range(3..=9),
            rng.gen_range(1..=4),
        );
        let m = rng.gen_range(1..=2);
        let (kh, kw) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let (sh, sw, dh, dw) = (rng.gen_range(1..=2), rng.gen_range(1..=2), 1, rng.gen_range(1..=2));
        let same = rng.gen_bool(0.5);
        let act = act_name(&mut rng);
        let bias = rng.gen_bool(0.7);
        if !same && (h < (kh - 1) * dh + 1 || w < (kw - 1) * dw + 1) {
            continue;
        }
        let oc = c * m;
        let x = rand_vec(&mut rng, n * h * w * c);
        let f = rand_vec(&mut rng, kh * kw * oc);
        let b = rand_vec(&mut rng, oc);
        let (oh, pt) = axis(h, kh, sh, dh, same);
        let (ow, pl) = axis(w, kw, sw, dw, same);
        let mut want = vec![0.0f32; n * oh * ow * oc];
        for bn in 0..n {
            for y in 0..oh {
                for xo in 0..ow {
                    for ch in 0..c {
                        for mm in 0..m {
                            let o = ch * m + mm;
                            let mut acc = 0.0f32;
                            for i in 0..kh {
                                for j in 0..kw {
                                    let iy = (y * sh + i * dh) as i64 - pt as i64;
                                    let ix = (xo * sw + j * dw) as i64 - pl as i64;
                                    if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                        continue;
                                    }
                                    let p = x[((bn * h + iy as usize) * w + ix as usize) * c + ch]
                                        * f[(i * kw + j) * oc + o];
                                    acc = acc + p;
                                }
                            }
                            if bias {
                                acc = acc + b[o];
                            }
                            want[((bn * oh + y) * ow + xo) * oc + o] = clamp(acc, act);
                        }
                    }
                }
            }
        }
        let mut inputs = vec![
            (vec![n, h, w, c], TensorData::F32(x)),
            (vec![1, kh, kw, oc], TensorData::F32(f)),
        ];
        if bias {
            inputs.push((vec![oc], TensorData::F32(b)));
        }
        let case = Case {
            op: builtin(BuiltinOp::DepthwiseConv2d),
            options: vec![
                ("stride_h", (sh as i64).into()),
                ("stride_w", (sw as i64).into()),
                ("dilation_h", (dh as i64).into()),
                ("dilation_w", (dw as i64).into()),
                ("padding", if same { "SAME" } else { "VALID" }.into()),
                ("activation", act.into()),
                ("depth_multiplier", (m as i64).into()),
            ],
            inputs,
        };
        let got = run_case(&case, 1, None).unwrap();
        assert_eq!(got.shape, vec![n, oh, ow, oc]);
        assert_bits(f32s(&got.data), &want, &format!("depthwise seed {seed}"));
    }
}

fn pool_case(seed: u64, max: bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, h, w, c) = (
        rng.gen_range(1..=2),
        rng.gen_range(2..=10),
        rng.gen_range(2..=10),
        rng.gen_range(1..=4),
    );
    let (fh, fw) = (rng.gen_range(1..=h.min(3)), rng.gen_range(1..=w.min(3)));
    let (sh, sw) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
    let same = rng.gen_bool(0.5);
    let act = act_name(&mut rng);
    let x = rand_vec(&mut rng, n * h * w * c);
    let (oh, pt) = axis(h, fh, sh, 1, same);
    let (ow, pl) = axis(w, fw, sw, 1, same);
    let mut want = vec![0.0f32; n * oh * ow * c];
    for bn in 0..n {
        for y in 0..oh {
            for xo in 0..ow {
                for ch in 0..c {
                    let mut vals = Vec::new();
                    for i in 0..fh {
                        for j in 0..fw {
                            let iy = (y * sh + i) as i64 - pt as i64;
                            let ix = (xo * sw + j) as i64 - pl as i64;
                            if iy >= 0 && ix >= 0 && iy < h as i64 && ix < w as i64 {
                                vals.push(x[((bn * h + iy as usize) * w + ix as usize) * c + ch]);
                            }
                        }
                    }
                    let v = if max {
                        vals.iter().copied().fold(f32::MIN, |a, b| if b > a { b } else { a })
                    } else {
                        let mut total = 0.0f32;
                        for v in &vals {
                            total = total + v;
                        }
                        total / vals.len() as f32
                    };
                    want[((bn * oh + y) * ow + xo) * c + ch] = clamp(v, act);
                }
            }
        }
    }
    let case = Case {
        op: builtin(if max {
            BuiltinOp::MaxPool2d
        } else {
            BuiltinOp::AveragePool2d
        }),
        options: vec![
            ("filter_h", (fh as i64).into()),
            ("filter_w", (fw as i64).into()),
            ("stride_h", (sh as i64).into()),
            ("stride_w", (sw as i64).into()),
            ("padding", if same { "SAME" } else { "VALID" }.into()),
            ("activation", act.into()),
        ],
        inputs: vec![(vec![n, h, w, c], TensorData::F32(x))],
    };
    let got = run_case(&case, 1, None).unwrap();
    assert_eq!(got.shape, vec![n, oh, ow, c]);
    assert_bits(f32s(&got.data), &want, &format!("pool seed {seed}"));
}

pub fn max_pool_matches_oracle() {
    for seed in 0..CASES {
        pool_case(2000 + seed, true);
    }
}

pub fn average_pool_matches_oracle() {
    for seed in 0..CASES {
        pool_case(3000 + seed, false);
    }
}

pub fn max_pool_lenet_shape() {
    let case = Case {
        op: builtin(BuiltinOp::MaxPool2d),
        options: vec![
            ("filter_h", 2i64.into()),
            ("filter_w", 2i64.into()),
            ("stride_h", 2i64.into()),
            ("stride_w", 2i64.into()),
            ("padding", "VALID".into()),
            ("activation", "NONE".into()),
        ],
        inputs: vec![(vec![1, 24, 24, 6], TensorData::F32(vec![0.5; 24 * 24 * 6]))],
    };
    assert_eq!(run_case(&case, 1, None).unwrap().shape, vec![1, 12, 12, 6]);
}

pub fn fully_connected_reference_matches_oracle() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let (case, want, shape) = fc_case(&mut rng, 64);
        let got = run_case(&case, 1, None).unwrap();
        assert_eq!(got.variant, Variant::Reference);
        assert_eq!(got.shape, shape);
        assert_bits(f32s(&got.data), &want, &format!("fc seed {seed}"));
    }
}

pub fn fully_connected_lenet_shape() {
    let case = Case {
        op: builtin(BuiltinOp::FullyConnected),
        options: vec![("activation", "RELU".into())],
        inputs: vec![
            (vec![1, 120], TensorData::F32(vec![0.1; 120])),
            (vec![84, 120], TensorData::F32(vec![0.1; 84 * 120])),
        ],
    };
    assert_eq!(run_case(&case, 1, None).unwrap().shape, vec![1, 84]);
}

pub fn softmax_matches_oracle() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
        let (outer, depth) = (rng.gen_range(1..=4), rng.gen_range(1..=20));
        let beta = *[1.0f64, 0.5, 2.0].choose(&mut rng).unwrap();
        let x: Vec<f32> = (0..outer * depth).map(|_| rng.gen_range(-5.0f32..5.0)).collect();
        let mut want = vec![0.0f32; x.len()];
        for r in 0..outer {
            let row = &x[r * depth..(r + 1) * depth];
            let m = row.iter().copied().fold(row[0], |a, b| if b > a { b } else { a });
            let mut sum = 0.0f32;
            for i in 0..depth {
                let e = ((row[i] - m) * beta as f32).exp();
                want[r * depth + i] = e;
                sum = sum + e;
            }
            for i in 0..depth {
                want[r * depth + i] = want[r * depth + i] / sum;
            }
        }
        let case = Case {
            op: builtin(BuiltinOp::Softmax),
            options: vec![("beta", beta.into())],
            inputs: vec![(vec![outer, depth], TensorData::F32(x))],
        };
        assert_bits(
            f32s(&run_case(&case, 1, None).unwrap().data),
            &want,
            &format!("softmax seed {seed}"),
        );
    }
}

pub fn elementwise_units_match_oracles() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(6000 + seed);
        let shape = vec![rng.gen_range(1..=3), rng.gen_range(1..=7), rng.gen_range(1..=5)];
        let len: usize = shape.iter().product();
        let a = rand_vec(&mut rng, len);
        let b = rand_vec(&mut rng, len);
        let act = act_name(&mut rng);

        let add = Case {
            op: builtin(BuiltinOp::Add),
            options: vec![("activation", act.into())],
            inputs: vec![
                (shape.clone(), TensorData::F32(a.clone())),
                (shape.clone(), TensorData::F32(b.clone())),
            ],
        };
        let want: Vec<f32> = a.iter().zip(&b).map(|(x, y)| clamp(x + y, act)).collect();
        assert_bits(f32s(&run_case(&add, 1, None).unwrap().data), &want, "add");

        let relu = Case {
            op: builtin(BuiltinOp::Relu),
            options: vec![],
            inputs: vec![(shape.clone(), TensorData::F32(a.clone()))],
        };
        let want: Vec<f32> = a.iter().map(|&x| if x < 0.0 { 0.0 } else { x }).collect();
        assert_bits(f32s(&run_case(&relu, 1, None).unwrap().data), &want, "relu");

        let (scale, shift) = (rng.gen_range(-2.0f64..2.0), rng.gen_range(-1.0f64..1.0));
        let ss = Case {
            op: OpId::custom(SCALE_SHIFT),
            options: vec![("scale", scale.into()), ("shift", shift.into())],
            inputs: vec![(shape.clone(), TensorData::F32(a.clone()))],
        };
        let want: Vec<f32> = a
            .iter()
            .map(|&x| {
                let p = scale as f32 * x;
                p + shift as f32
            })
            .collect();
        assert_bits(f32s(&run_case(&ss, 1, None).unwrap().data), &want, "scale_shift");

        let new_shape = vec![len as i64];
        let reshape = Case {
            op: builtin(BuiltinOp::Reshape),
            options: vec![("new_shape", new_shape.into())],
            inputs: vec![(shape.clone(), TensorData::F32(a.clone()))],
        };
        let got = run_case(&reshape, 1, None).unwrap();
        assert_eq!(got.shape, vec![len]);
        assert_bits(f32s(&got.data), &a, "reshape");
    }
}

pub fn integer_units_match_oracles() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
        let len = rng.gen_range(1..=50);
        let mut a: Vec<i32> = (0..len).map(|_| rng.gen()).collect();
        let b: Vec<i32> = (0..len).map(|_| rng.gen()).collect();
        a[0] = i32::MAX;
        let act = act_name(&mut rng);
        let case = Case {
            op: builtin(BuiltinOp::Add),
            options: vec![("activation", act.into())],
            inputs: vec![
                (vec![len], TensorData::I32(a.clone())),
                (vec![len], TensorData::I32(b.clone())),
            ],
        };
        let (lo, hi) = match act {
            "NONE" => (i32::MIN, i32::MAX),
            "RELU" => (0, i32::MAX),
            _ => (0, 6),
        };
        let want: Vec<i32> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| x.wrapping_add(*y).max(lo).min(hi))
            .collect();
        assert_eq!(
            run_case(&case, 1, None).unwrap().data,
            TensorData::I32(want),
            "add i32 seed {seed}"
        );

        let reshape = Case {
            op: builtin(BuiltinOp::Reshape),
            options: vec![("new_shape", vec![1i64, len as i64].into())],
            inputs: vec![(vec![len], TensorData::I32(a.clone()))],
        };
        assert_eq!(run_case(&reshape, 1, None).unwrap().data, TensorData::I32(a));
    }
}

pub fn concatenation_matches_oracle() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(8000 + seed);
        let rank = rng.gen_range(1..=4);
        let base: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..=4)).collect();
        let axis_i = rng.gen_range(0..rank);
        let parts = rng.gen_range(1..=3);
        let mut inputs = Vec::new();
        for _ in 0..parts {
            let mut s = base.clone();
            s[axis_i] = rng.gen_range(1..=3);
            let n: usize = s.iter().product();
            inputs.push((s, TensorData::F32(rand_vec(&mut rng, n))));
        }
        let outer: usize = base[..axis_i].iter().product();
        let mut want = Vec::new();
        for o in 0..outer {
            for (s, d) in &inputs {
                let chunk: usize = s[axis_i..].iter().product();
                want.extend_from_slice(&f32s(d)[o * chunk..(o + 1) * chunk]);
            }
        }
        let axis_opt = if rng.gen_bool(0.3) {
            axis_i as i64 - rank as i64
        } else {
            axis_i as i64
        };
        let case = Case {
            op: builtin(BuiltinOp::Concatenation),
            options: vec![("axis", axis_opt.into())],
            inputs,
        };
        let got = run_case(&case, 1, None).unwrap();
        assert_bits(f32s(&got.data), &want, &format!("concat seed {seed}"));
    }
}

pub fn pad_matches_oracle() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed);
        let rank = rng.gen_range(1..=4);
        let shape: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..=4)).collect();
        let pads: Vec<usize> = (0..rank * 2).map(|_| rng.gen_range(0..=2)).collect();
        let n: usize = shape.iter().product();
        let x = rand_vec(&mut rng, n);
        let out_shape: Vec<usize> = (0..rank).map(|d| shape[d] + pads[2 * d] + pads[2 * d + 1]).collect();
        let mut want = vec![0.0f32; out_shape.iter().product()];
        for (flat, &v) in x.iter().enumerate() {
            let mut rem = flat;
            let mut idx = vec![0; rank];
            for d in (0..rank).rev() {
                idx[d] = rem % shape[d];
                rem /= shape[d];
            }
            let mut dst = 0;
            for d in 0..rank {
                dst = dst * out_shape[d] + idx[d] + pads[2 * d];
            }
            want[dst] = v;
        }
        let case = Case {
            op: builtin(BuiltinOp::Pad),
            options: vec![("paddings", pads.iter().map(|&p| p as i64).collect::<Vec<_>>().into())],
            inputs: vec![(shape, TensorData::F32(x))],
        };
        let got = run_case(&case, 1, None).unwrap();
        assert_eq!(got.shape, out_shape);
        assert_bits(f32s(&got.data), &want, &format!("pad seed {seed}"));
    }
}

// ---------------------------------------------------------------- tiled units

pub fn tiled_conv_within_tolerance_and_thread_independent() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let (case, s, x, f, b) = conv_case(&mut rng, false);
        let (want, _) = conv_oracle(&s, &x, &f, &b);
        let two = run_case(&case, 2, None).unwrap();
        assert_eq!(two.variant, Variant::Tiled);
        assert!(max_abs(f32s(&two.data), &want) <= 1e-5, "seed {seed}");
        for threads in [3, 4] {
            assert_eq!(
                run_case(&case, threads, None).unwrap().data,
                two.data,
                "seed {seed} threads {threads}"
            );
        }
    }
}

pub fn tiled_units_are_bitwise_when_tile_covers_depth() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(11_000 + seed);
        let (case, s, x, f, b) = conv_case(&mut rng, true);
        assert!(s.kh * s.kw * s.c <= DEFAULT_K_TILE);
        let (want, _) = conv_oracle(&s, &x, &f, &b);
        assert_bits(
            f32s(&run_case(&case, 4, None).unwrap().data),
            &want,
            &format!("conv tiled seed {seed}"),
        );

        let (case, want, _) = fc_case(&mut rng, DEFAULT_K_TILE);
        assert_bits(
            f32s(&run_case(&case, 4, None).unwrap().data),
            &want,
            &format!("fc tiled seed {seed}"),
        );
    }
}

pub fn tiled_fc_within_tolerance_and_thread_independent() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(12_000 + seed);
        let (case, want, _) = fc_case(&mut rng, 300);
        let two = run_case(&case, 2, None).unwrap();
        assert_eq!(two.variant, Variant::Tiled);
        assert!(max_abs(f32s(&two.data), &want) <= 1e-5, "seed {seed}");
        assert_eq!(run_case(&case, 4, None).unwrap().data, two.data);
    }
}

pub fn variants_agree_for_every_accepted_status() {
    let status =
        |pairs: &[(&str, &str)]| -> OpStatus { pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() };
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(13_000 + seed);
        let (case, _, _) = fc_case(&mut rng, 200);
        for layout in ["row_major", "transposed"] {
            let mut outs = Vec::new();
            for cache in ["true", "false"] {
                let st = status(&[("weights_layout", layout), ("lhs_cacheable", cache)]);
                for threads in [1, 4] {
                    outs.push(run_case(&case, threads, Some(st.clone())).unwrap().data);
                }
            }
            for o in &outs[1..] {
                assert!(max_abs(f32s(o), f32s(&outs[0])) <= 1e-5, "seed {seed} {layout}");
            }
        }

        let (case, ..) = conv_case(&mut rng, false);
        let reference = run_case(&case, 1, Some(status(&[("weights_layout", "OHWI")]))).unwrap();
        for im2col in ["true", "false"] {
            match run_case(&case, 4, Some(status(&[("im2col", im2col)]))) {
                Ok(tiled) => assert!(max_abs(f32s(&tiled.data), f32s(&reference.data)) <= 1e-5),
                Err(e) => assert!(matches!(e, KernelError::UnsupportedStatusCombination(_)), "{e}"),
            }
        }
    }
}

pub fn out_of_domain_status_is_invalid() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (case, _, _) = fc_case(&mut rng, 8);
    let st: OpStatus = [("weights_layout", "diagonal"), ("lhs_cacheable", "true")]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let err = run_case(&case, 1, Some(st)).unwrap_err();
    assert!(err.to_string().contains("invalid status"), "{err}");
}

// ---------------------------------------------------------------- status sensitivity

fn diffs_under(hidden: &HiddenStatusTable, threads: usize) -> Result<Vec<f64>, InterpError> {
    let bundle = fixtures::lenet(fixtures::DEFAULT_SEED);
    let device = DeviceInfo::new(threads);
    let right = interpreter::load(&bundle, device)?;
    let wrong = interpreter::load_with(&bundle, device, &Registry::builtin(), hidden)?;
    let cfg = VerifyConfig::default();
    verification_inputs(&right.input_info(), &cfg)
        .iter()
        .map(|x| Ok(output_diff(&right.invoke(x)?, &wrong.invoke(x)?).unwrap()))
        .collect()
}

fn sensitive(diffs: &[f64]) -> usize {
    diffs.iter().filter(|&&d| d > 1e-3).count()
}

pub fn wrong_conv_layout_changes_outputs() {
    let mut hidden = HiddenStatusTable::default();
    hidden.set("conv2d_ref", "weights_layout", "HWIO");
    let diffs = diffs_under(&hidden, 1).unwrap();
    assert!(sensitive(&diffs) >= 95, "{} of 100", sensitive(&diffs));
}

pub fn wrong_fc_layout_changes_outputs() {
    for (template, threads) in [("fully_connected_ref", 1), ("fully_connected_tiled", 4)] {
        let mut hidden = HiddenStatusTable::default();
        hidden.set(template, "weights_layout", "transposed");
        let diffs = diffs_under(&hidden, threads).unwrap();
        assert!(sensitive(&diffs) >= 95, "{template}: {} of 100", sensitive(&diffs));
    }
}

pub fn wrong_im2col_is_an_unsupported_combination() {
    let mut hidden = HiddenStatusTable::default();
    hidden.set("conv2d_tiled", "im2col", "false");
    let err = diffs_under(&hidden, 4).unwrap_err();
    assert!(err.to_string().contains("unsupported status combination"), "{err}");
}

pub fn cache_hint_is_performance_only() {
    let mut hidden = HiddenStatusTable::default();
    hidden.set("fully_connected_ref", "lhs_cacheable", "false");
    hidden.set("fully_connected_tiled", "lhs_cacheable", "false");
    for threads in [1, 4] {
        assert!(diffs_under(&hidden, threads).unwrap().iter().all(|&d| d == 0.0));
    }
}

pub fn every_unit_dtype_pair_resolves() {
    let registry = Registry::builtin();
    for (op, dtype) in modelless::kernels::expected_builtin_pairs() {
        for threads in [1, 4] {
            assert!(
                registry.lookup(&op, dtype, &DeviceInfo::new(threads)).is_ok(),
                "{op} {dtype}"
            );
        }
    }
    let err = registry
        .lookup(&builtin(BuiltinOp::Conv2d), DataType::I32, &DeviceInfo::new(1))
        .unwrap_err();
    assert!(err.to_string().contains("unsupported dtype"));
}
