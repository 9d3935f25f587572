// Emission: a plan of literal kernel calls over named buffers, and its
// rendering into three source files (main.rs, driver.rs, weights.rs).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::graph::{DataType, ModelBundle};
use crate::kernels::template_source;

use super::{CodegenError, ConfigAnalysis, ExtractionResult, Operand, Result, StatusAssignment};

/// Tokens that must never appear in emitted text.
pub const FORBIDDEN_TOKENS: [&str; 6] = [".tflite", ".lite", "graph.json", ".params", "MLW0", "org.tensorflow"];

const WARMUP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ElemKind {
    F32,
    I32,
}

impl ElemKind {
    fn rust_type(self) -> &'static str {
        match self {
            ElemKind::F32 => "f32",
            ElemKind::I32 => "i32",
        }
    }

    fn zero(self) -> &'static str {
        match self {
            ElemKind::F32 => "0.0f32",
            ElemKind::I32 => "0i32",
        }
    }
}

impl From<DataType> for ElemKind {
    fn from(d: DataType) -> Self {
        match d {
            DataType::F32 => ElemKind::F32,
            DataType::I32 => ElemKind::I32,
        }
    }
}

/// A program input or output. Outputs name the buffer they are copied from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmitIo {
    pub symbol: String,
    pub kind: ElemKind,
    pub len: usize,
    pub source: Option<String>,
}

/// A weight array as raw 32-bit words, in the layout its consumer reads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmitWeight {
    pub symbol: String,
    pub kind: ElemKind,
    pub words: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmitBuffer {
    pub symbol: String,
    pub kind: ElemKind,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmitCall {
    pub template_id: &'static str,
    pub geometry: String,
    /// Operand expressions, each a slice.
    pub inputs: Vec<String>,
    pub output: EmitBuffer,
    pub scratch_len: usize,
    /// Buffers whose last reader is this call.
    pub release_after: Vec<EmitBuffer>,
}

/// Everything the emitted program contains, with no trace of the model
/// container or registry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmissionPlan {
    /// Distinct templates in first-use order.
    pub templates: Vec<&'static str>,
    pub calls: Vec<EmitCall>,
    pub weights: Vec<EmitWeight>,
    pub inputs: Vec<EmitIo>,
    pub outputs: Vec<EmitIo>,
    pub scratch_len: usize,
    pub threads: usize,
    pub entry: String,
}

fn weight_words(data: &[u8]) -> Vec<u32> {
    data.chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

impl EmissionPlan {
    /// Binds every operator with its assigned status and records the literal
    /// geometry, operands and buffers of each call.
    pub fn build(
        bundle: &ModelBundle,
        extraction: &ExtractionResult,
        analysis: &ConfigAnalysis,
        assignment: &StatusAssignment,
    ) -> Result<Self> {
        let graph = &bundle.graph;
        let kind_of = |id: usize| {
            graph
                .tensor(id)
                .map(|t| ElemKind::from(t.dtype))
                .unwrap_or(ElemKind::F32)
        };
        let mut weights: BTreeMap<usize, EmitWeight> = BTreeMap::new();
        let mut add_weight = |tensor: usize, key: u32| -> Result<String> {
            let symbol = format!("W{tensor}");
            if !weights.contains_key(&tensor) {
                let entry = bundle
                    .weights
                    .get(key)
                    .ok_or(CodegenError::DanglingWeight { tensor, key })?;
                weights.insert(
                    tensor,
                    EmitWeight {
                        symbol: symbol.clone(),
                        kind: entry.dtype.into(),
                        words: weight_words(&entry.data),
                    },
                );
            }
            Ok(format!("&weights::{symbol}[..]"))
        };

        let mut last_use: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, b) in analysis.bindings.iter().enumerate() {
            for operand in &b.inputs {
                if let Operand::Produced { tensor, .. } = operand {
                    last_use.insert(*tensor, i);
                }
            }
        }
        let mut templates = Vec::new();
        let mut calls = Vec::with_capacity(extraction.units.len());
        let mut scratch_len = 0;
        for (index, ((unit, params), binding)) in extraction
            .units
            .iter()
            .zip(&analysis.params)
            .zip(&analysis.bindings)
            .enumerate()
        {
            if template_source(unit.template_id).is_none() {
                return Err(CodegenError::UnresolvedTemplate(unit.template_id.to_string()));
            }
            let status = assignment.per_op.get(index).cloned().unwrap_or_default();
            let shapes: Vec<&[usize]> = binding.input_shapes.iter().map(Vec::as_slice).collect();
            let call = unit
                .bind(params, &status, &shapes, &binding.output_shape, &extraction.device)
                .map_err(|source| CodegenError::Operator {
                    index,
                    op: graph.operators[index].op.clone(),
                    source,
                })?;
            let inputs = binding
                .inputs
                .iter()
                .map(|operand| match *operand {
                    Operand::GraphInput { slot, .. } => Ok(format!("&in{slot}[..]")),
                    Operand::Weight { tensor, key } => add_weight(tensor, key),
                    Operand::Produced { tensor, .. } => Ok(format!("&b{tensor}[..]")),
                })
                .collect::<Result<Vec<_>>>()?;
            if !templates.contains(&call.template_id) {
                templates.push(call.template_id);
            }
            scratch_len = scratch_len.max(call.scratch_len);
            let release_after = binding
                .inputs
                .iter()
                .filter_map(|operand| match *operand {
                    Operand::Produced { tensor, .. }
                        if last_use.get(&tensor) == Some(&index) && !graph.outputs.contains(&tensor) =>
                    {
                        Some(buffer(tensor, kind_of(tensor), &analysis.shapes[&tensor]))
                    }
                    _ => None,
                })
                .fold(Vec::new(), |mut acc: Vec<EmitBuffer>, b| {
                    if !acc.contains(&b) {
                        acc.push(b);
                    }
                    acc
                });
            calls.push(EmitCall {
                template_id: call.template_id,
                geometry: call.geometry_literal,
                inputs,
                output: buffer(binding.output, kind_of(binding.output), &binding.output_shape),
                scratch_len: call.scratch_len,
                release_after,
            });
        }

        let inputs = graph
            .inputs
            .iter()
            .enumerate()
            .map(|(slot, &id)| EmitIo {
                symbol: format!("in{slot}"),
                kind: kind_of(id),
                len: analysis.shapes.get(&id).map(|s| s.iter().product()).unwrap_or(0),
                source: None,
            })
            .collect();
        let mut outputs = Vec::with_capacity(graph.outputs.len());
        for (slot, &id) in graph.outputs.iter().enumerate() {
            let t = graph
                .tensor(id)
                .ok_or_else(|| CodegenError::Manifest(format!("output tensor {id} does not exist")))?;
            let source = if let Some(key) = t.weight_ref {
                add_weight(id, key)?
            } else if let Some(pos) = graph.inputs.iter().position(|&i| i == id) {
                format!("&in{pos}[..]")
            } else {
                format!("&b{id}[..]")
            };
            outputs.push(EmitIo {
                symbol: format!("out{slot}"),
                kind: kind_of(id),
                len: analysis.shapes.get(&id).map(|s| s.iter().product()).unwrap_or(0),
                source: Some(source),
            });
        }

        Ok(Self {
            templates,
            calls,
            weights: weights.into_values().collect(),
            inputs,
            outputs,
            scratch_len,
            threads: extraction.device.threads,
            entry: "entry".to_string(),
        })
    }

    /// Adds `by` to one element of an F32 weight. Returns false if the
    /// weight or element does not exist.
    pub fn perturb_weight(&mut self, weight: usize, element: usize, by: f32) -> bool {
        match self.weights.get_mut(weight) {
            Some(w) if w.kind == ElemKind::F32 && element < w.words.len() => {
                w.words[element] = (f32::from_bits(w.words[element]) + by).to_bits();
                true
            }
            _ => false,
        }
    }
}

fn buffer(tensor: usize, kind: ElemKind, shape: &[usize]) -> EmitBuffer {
    EmitBuffer {
        symbol: format!("b{tensor}"),
        kind,
        len: shape.iter().product(),
    }
}

/// Emitted source texts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFiles {
    pub main: String,
    pub driver: String,
    pub weights: String,
}

impl SourceFiles {
    pub fn files(&self) -> [(&'static str, &str); 3] {
        [
            ("main.rs", self.main.as_str()),
            ("driver.rs", self.driver.as_str()),
            ("weights.rs", self.weights.as_str()),
        ]
    }

    /// Forbidden tokens found anywhere in the sources.
    pub fn forbidden_hits(&self) -> Vec<(&'static str, &'static str)> {
        let mut hits = Vec::new();
        for (name, text) in self.files() {
            for token in FORBIDDEN_TOKENS {
                if text.contains(token) {
                    hits.push((name, token));
                }
            }
        }
        hits
    }

    /// Template ids instantiated by the driver, in order of appearance.
    pub fn template_census(&self) -> Vec<String> {
        self.driver
            .lines()
            .filter_map(|l| l.strip_prefix("pub mod "))
            .filter_map(|l| l.strip_suffix(" {"))
            .map(str::to_string)
            .collect()
    }
}

pub fn emit_source(plan: &EmissionPlan) -> Result<SourceFiles> {
    Ok(SourceFiles {
        main: emit_main(plan),
        driver: emit_driver(plan)?,
        weights: emit_weights(plan),
    })
}

fn emit_weights(plan: &EmissionPlan) -> String {
    let mut s = String::from(
        "// Constant tensors as exact bit patterns.\n\n\
         const fn f32s<const N: usize>(w: [u32; N]) -> [f32; N] {\n    \
             let mut out = [0.0f32; N];\n    let mut i = 0;\n    \
             while i < N {\n        out[i] = f32::from_bits(w[i]);\n        i += 1;\n    }\n    out\n}\n\n\
         #[allow(dead_code)]\n\
         const fn i32s<const N: usize>(w: [u32; N]) -> [i32; N] {\n    \
             let mut out = [0i32; N];\n    let mut i = 0;\n    \
             while i < N {\n        out[i] = w[i] as i32;\n        i += 1;\n    }\n    out\n}\n",
    );
    for w in &plan.weights {
        let (ty, conv) = match w.kind {
            ElemKind::F32 => ("f32", "f32s"),
            ElemKind::I32 => ("i32", "i32s"),
        };
        let _ = write!(s, "\npub static {}: [{ty}; {}] = {conv}([", w.symbol, w.words.len());
        for (i, word) in w.words.iter().enumerate() {
            if i % 8 == 0 {
                s.push_str("\n    ");
            } else {
                s.push(' ');
            }
            let _ = write!(s, "0x{word:08x},");
        }
        s.push_str("\n]);\n");
    }
    s
}

fn emit_driver(plan: &EmissionPlan) -> Result<String> {
    let mut s = String::from("// Inference driver: kernel calls with literal geometries.\n\n");
    s.push_str("use crate::weights;\n");
    for id in &plan.templates {
        let src = template_source(id).ok_or_else(|| CodegenError::UnresolvedTemplate(id.to_string()))?;
        let _ = write!(s, "\n#[allow(dead_code)]\npub mod {id} {{\n");
        for line in src.lines() {
            if line.is_empty() {
                s.push('\n');
            } else {
                let _ = writeln!(s, "    {line}");
            }
        }
        s.push_str("}\n");
    }
    s.push_str(
        "\n/// Bytes allocated by one call of the entry function.\n\
         #[derive(Debug, Default, Clone, Copy)]\n\
         pub struct Stats {\n    pub invoke_bytes: u64,\n    pub live_bytes: u64,\n    pub peak_bytes: u64,\n}\n\n\
         impl Stats {\n    \
             fn grab(&mut self, n: usize) {\n        \
                 self.invoke_bytes += (n * 4) as u64;\n        \
                 self.live_bytes += (n * 4) as u64;\n        \
                 self.peak_bytes = self.peak_bytes.max(self.live_bytes);\n    }\n\n    \
             fn release(&mut self, n: usize) {\n        \
                 self.live_bytes -= (n * 4) as u64;\n    }\n}\n",
    );
    let lens = |ios: &[EmitIo]| ios.iter().map(|io| io.len.to_string()).collect::<Vec<_>>().join(", ");
    let _ = write!(
        s,
        "\npub const INPUT_LENS: [usize; {}] = [{}];\npub const OUTPUT_LENS: [usize; {}] = [{}];\n",
        plan.inputs.len(),
        lens(&plan.inputs),
        plan.outputs.len(),
        lens(&plan.outputs)
    );

    let mut args: Vec<String> = plan
        .inputs
        .iter()
        .map(|io| format!("{}: &[{}]", io.symbol, io.kind.rust_type()))
        .collect();
    args.extend(
        plan.outputs
            .iter()
            .map(|io| format!("{}: &mut [{}]", io.symbol, io.kind.rust_type())),
    );
    args.push("stats: &mut Stats".into());
    let _ = write!(s, "\npub fn {}({}) {{\n", plan.entry, args.join(", "));
    let _ = writeln!(s, "    stats.grab({});", plan.scratch_len);
    let _ = writeln!(s, "    let mut scratch = vec![0.0f32; {}];", plan.scratch_len);
    for call in &plan.calls {
        let out = &call.output;
        let _ = writeln!(s, "    stats.grab({});", out.len);
        let _ = writeln!(
            s,
            "    let mut {} = vec![{}; {}];",
            out.symbol,
            out.kind.zero(),
            out.len
        );
        let _ = writeln!(s, "    {{");
        let _ = writeln!(s, "        let g = {};", call.geometry);
        let _ = writeln!(
            s,
            "        {}::run(&g, &[{}], &mut {}, &mut scratch);",
            call.template_id,
            call.inputs.join(", "),
            out.symbol
        );
        let _ = writeln!(s, "    }}");
        for b in &call.release_after {
            let _ = writeln!(s, "    drop({});", b.symbol);
            let _ = writeln!(s, "    stats.release({});", b.len);
        }
    }
    for io in &plan.outputs {
        let _ = writeln!(
            s,
            "    {}.copy_from_slice({});",
            io.symbol,
            io.source.as_deref().unwrap_or("&[]")
        );
    }
    let mut live: Vec<&EmitBuffer> = plan.calls.iter().map(|c| &c.output).collect();
    live.retain(|b| !plan.calls.iter().any(|c| c.release_after.contains(b)));
    for b in live {
        let _ = writeln!(s, "    drop({});", b.symbol);
        let _ = writeln!(s, "    stats.release({});", b.len);
    }
    s.push_str("    drop(scratch);\n");
    let _ = writeln!(s, "    stats.release({});", plan.scratch_len);
    s.push_str("}\n");
    Ok(s)
}

const MAIN_HEAD: &str = r#"// Reads raw little-endian inputs, runs the driver, writes raw outputs.

mod driver;
mod weights;

use std::process::exit;
use std::time::Instant;

fn fail(msg: &str) -> ! {
    eprintln!("{msg}");
    exit(1);
}

fn words(bytes: &[u8]) -> impl Iterator<Item = [u8; 4]> + '_ {
    bytes.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]])
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let reps = match args.len() {
        3 => None,
        5 if args[3] == "--stats" => Some(args[4].parse::<usize>().unwrap_or_else(|_| fail("bad repetition count"))),
        _ => {
            eprintln!("usage: {} INPUT OUTPUT [--stats REPS]", args[0]);
            exit(2);
        }
    };
    let raw = std::fs::read(&args[1]).unwrap_or_else(|e| fail(&format!("{}: {e}", args[1])));
    let expected: usize = driver::INPUT_LENS.iter().sum::<usize>() * 4;
    if raw.len() != expected {
        fail(&format!("expected {expected} input bytes, got {}", raw.len()));
    }
"#;

const MAIN_STATS: &str = r#"    let mut stats = driver::Stats::default();
    CALL;
    let first = stats;
    if let Some(reps) = reps {
        for _ in 0..WARMUP {
            let mut stats = driver::Stats::default();
            CALL;
        }
        let mut samples = Vec::with_capacity(reps);
        for _ in 0..reps {
            let mut stats = driver::Stats::default();
            let start = Instant::now();
            CALL;
            samples.push(start.elapsed().as_nanos() as u64);
        }
        samples.sort_unstable();
        let n = samples.len();
        let mean = if n == 0 { 0.0 } else { samples.iter().map(|&x| x as f64).sum::<f64>() / n as f64 };
        let median = match n {
            0 => 0.0,
            _ if n % 2 == 1 => samples[n / 2] as f64,
            _ => (samples[n / 2 - 1] + samples[n / 2]) as f64 / 2.0,
        };
        let min = samples.first().copied().unwrap_or(0) as f64;
        println!(
            "{{\"load_bytes\":0,\"configure_bytes\":0,\"invoke_bytes\":{},\"peak_bytes\":{},\"mean_ns\":{:?},\"median_ns\":{:?},\"min_ns\":{:?},\"samples\":{}}}",
            first.invoke_bytes, first.peak_bytes, mean, median, min, n
        );
    }
    let mut bytes = Vec::new();
"#;

fn emit_main(plan: &EmissionPlan) -> String {
    let mut s = String::from(MAIN_HEAD);
    let mut pos = 0;
    for io in &plan.inputs {
        let ty = io.kind.rust_type();
        let _ = writeln!(
            s,
            "    let {}: Vec<{ty}> = words(&raw[{pos}..{}]).map({ty}::from_le_bytes).collect();",
            io.symbol,
            pos + io.len * 4
        );
        pos += io.len * 4;
    }
    for io in &plan.outputs {
        let _ = writeln!(s, "    let mut {} = vec![{}; {}];", io.symbol, io.kind.zero(), io.len);
    }
    let call_args: Vec<String> = plan
        .inputs
        .iter()
        .map(|io| format!("&{}", io.symbol))
        .chain(plan.outputs.iter().map(|io| format!("&mut {}", io.symbol)))
        .chain(std::iter::once("&mut stats".to_string()))
        .collect();
    let call = format!("driver::{}({})", plan.entry, call_args.join(", "));
    s.push_str(&MAIN_STATS.replace("CALL", &call).replace("WARMUP", &WARMUP.to_string()));
    for io in &plan.outputs {
        let _ = writeln!(
            s,
            "    bytes.extend({}.iter().flat_map(|v| v.to_le_bytes()));",
            io.symbol
        );
    }
    s.push_str("    std::fs::write(&args[2], bytes).unwrap_or_else(|e| fail(&format!(\"{}: {e}\", args[2])));\n}\n");
    s
}
