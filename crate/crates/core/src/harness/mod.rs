//! Verification and benchmarking of a generated program against the
//! interpreter.
//!
//! The output difference for one input is the l2 norm of the flattened
//! output difference, computed in f64; the translation error of a build is
//! the maximum of that over the verification inputs.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codegen::GeneratedArtifact;
use crate::graph::{DataType, ModelBundle};
use crate::interpreter::{self, InterpError, PhaseCounters, TensorData, TensorInfo};
use crate::kernels::DeviceInfo;

pub const DEFAULT_DELTA: f64 = 1e-6;
pub const DEFAULT_N_INPUTS: usize = 100;
pub const DEFAULT_VERIFY_SEED: u64 = 0x5eed_2024;
pub const DEFAULT_REPETITIONS: usize = 1000;
const WARMUP: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error("executable {path} failed ({status}): {stderr}")]
    Exec {
        path: String,
        status: String,
        stderr: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid verify config: {0}")]
    Config(String),
    #[error("bad stats output: {0}")]
    Stats(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub delta: f64,
    pub n_inputs: usize,
    pub seed: u64,
    pub input_range: [f32; 2],
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            n_inputs: DEFAULT_N_INPUTS,
            seed: DEFAULT_VERIFY_SEED,
            input_range: [-1.0, 1.0],
        }
    }
}

impl VerifyConfig {
    pub fn check(&self) -> Result<()> {
        let [low, high] = self.input_range;
        if !(low < high) {
            return Err(HarnessError::Config(format!("input range [{low}, {high}] is empty")));
        }
        if self.n_inputs == 0 {
            return Err(HarnessError::Config("n_inputs must be at least 1".into()));
        }
        if !(self.delta >= 0.0) {
            return Err(HarnessError::Config(format!(
                "delta {} must be non-negative",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Seeded verification inputs, one set of graph inputs per sample.
pub fn verification_inputs(info: &[TensorInfo], cfg: &VerifyConfig) -> Vec<Vec<TensorData>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let [low, high] = cfg.input_range;
    (0..cfg.n_inputs)
        .map(|_| {
            info.iter()
                .map(|t| match t.dtype {
                    DataType::F32 => TensorData::F32((0..t.elements()).map(|_| rng.gen_range(low..high)).collect()),
                    DataType::I32 => {
                        let (lo, hi) = (low.floor() as i32, high.ceil() as i32);
                        TensorData::I32((0..t.elements()).map(|_| rng.gen_range(lo..=hi)).collect())
                    }
                })
                .collect()
        })
        .collect()
}

/// Euclidean distance of two equally long vectors.
pub fn l2(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(HarnessError::ShapeMismatch(format!(
            "{} vs {} values",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

fn flatten(outputs: &[TensorData]) -> Vec<f64> {
    outputs.iter().flat_map(TensorData::to_f64).collect()
}

/// l2 distance between two sets of outputs, flattened in output order.
pub fn output_diff(a: &[TensorData], b: &[TensorData]) -> Result<f64> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(HarnessError::ShapeMismatch("output sets differ in shape".into()));
    }
    l2(&flatten(a), &flatten(b))
}

/// Per-input l2 differences.
pub fn diff(oracle: &[Vec<TensorData>], candidate: &[Vec<TensorData>]) -> Result<Vec<f64>> {
    if oracle.len() != candidate.len() {
        return Err(HarnessError::ShapeMismatch(format!(
            "{} oracle outputs vs {} candidate outputs",
            oracle.len(),
            candidate.len()
        )));
    }
    oracle.iter().zip(candidate).map(|(a, b)| output_diff(a, b)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffReport {
    pub diffs: Vec<f64>,
    pub max_error: f64,
    /// Largest elementwise absolute difference over all inputs.
    pub max_abs: f64,
    pub pass: bool,
    pub delta: f64,
    pub n_inputs: usize,
    pub seed: u64,
}

impl DiffReport {
    pub fn new(diffs: Vec<f64>, max_abs: f64, cfg: &VerifyConfig) -> Self {
        let max_error = diffs
            .iter()
            .copied()
            .fold(0.0f64, |m, d| if d.is_nan() || d > m { d } else { m });
        Self {
            n_inputs: diffs.len(),
            pass: max_error <= cfg.delta,
            diffs,
            max_error,
            max_abs,
            delta: cfg.delta,
            seed: cfg.seed,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn max_abs(a: &[TensorData], b: &[TensorData]) -> f64 {
    flatten(a)
        .iter()
        .zip(flatten(b))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn exec(exe: &Path, args: &[&std::ffi::OsStr]) -> Result<std::process::Output> {
    let out = Command::new(exe).args(args).output().map_err(io_err(exe))?;
    if !out.status.success() {
        return Err(HarnessError::Exec {
            path: exe.display().to_string(),
            status: out.status.to_string(),
            stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        });
    }
    Ok(out)
}

/// Runs a generated executable once on raw input bytes and returns its raw output.
pub fn run_executable(exe: &Path, input: &[u8]) -> Result<Vec<u8>> {
    let dir = tempfile::tempdir().map_err(io_err(exe))?;
    let in_path = dir.path().join("in.raw");
    let out_path = dir.path().join("out.raw");
    fs::write(&in_path, input).map_err(io_err(&in_path))?;
    exec(exe, &[in_path.as_os_str(), out_path.as_os_str()])?;
    fs::read(&out_path).map_err(io_err(&out_path))
}

fn decode_outputs(info: &[TensorInfo], raw: &[u8]) -> Result<Vec<TensorData>> {
    let expected: usize = info.iter().map(|t| t.elements() * 4).sum();
    if raw.len() != expected {
        return Err(HarnessError::ShapeMismatch(format!(
            "executable wrote {} bytes, expected {expected}",
            raw.len()
        )));
    }
    let mut pos = 0;
    Ok(info
        .iter()
        .map(|t| {
            let n = t.elements() * 4;
            let data = TensorData::from_le_bytes(t.dtype, &raw[pos..pos + n]).expect("aligned");
            pos += n;
            data
        })
        .collect())
}

fn raw_inputs(inputs: &[TensorData]) -> Vec<u8> {
    inputs.iter().flat_map(TensorData::to_le_bytes).collect()
}

/// Runs interpreter and executable on the same seeded inputs.
pub fn verify(bundle: &ModelBundle, artifact: &GeneratedArtifact, cfg: &VerifyConfig) -> Result<DiffReport> {
    cfg.check()?;
    let plan = interpreter::load(bundle, DeviceInfo::new(artifact.threads))?;
    let out_info = plan.output_info();
    let mut diffs = Vec::with_capacity(cfg.n_inputs);
    let mut worst_abs = 0.0f64;
    for x in verification_inputs(&plan.input_info(), cfg) {
        let want = plan.invoke(&x)?;
        let got = decode_outputs(&out_info, &run_executable(&artifact.executable, &raw_inputs(&x))?)?;
        diffs.push(output_diff(&want, &got)?);
        worst_abs = worst_abs.max(max_abs(&want, &got));
    }
    Ok(DiffReport::new(diffs, worst_abs, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ns: f64,
    pub median_ns: f64,
    pub min_ns: f64,
    pub samples: usize,
}

impl LatencyStats {
    pub fn from_samples(samples: &[u64]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let median = if n == 0 {
            0.0
        } else if n % 2 == 1 {
            sorted[n / 2] as f64
        } else {
            (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
        };
        Self {
            mean_ns: if n == 0 {
                0.0
            } else {
                sorted.iter().map(|&s| s as f64).sum::<f64>() / n as f64
            },
            median_ns: median,
            min_ns: sorted.first().copied().unwrap_or(0) as f64,
            samples: n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeploymentBench {
    pub latency: LatencyStats,
    pub memory: PhaseCounters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub repetitions: usize,
    pub interpreter: DeploymentBench,
    pub generated: DeploymentBench,
    /// Generated mean latency over interpreter mean latency.
    pub latency_ratio: f64,
    pub latency_reduction_pct: f64,
    pub peak_reduction_pct: f64,
    #[serde(skip)]
    pub interpreter_samples_ns: Vec<u64>,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Per-repetition interpreter latencies as CSV.
    pub fn samples_csv(&self) -> String {
        let mut s = String::from("repetition,interpreter_ns\n");
        for (i, ns) in self.interpreter_samples_ns.iter().enumerate() {
            s.push_str(&format!("{i},{ns}\n"));
        }
        s
    }
}

#[derive(Debug, Deserialize)]
struct ProgramStats {
    load_bytes: u64,
    configure_bytes: u64,
    invoke_bytes: u64,
    peak_bytes: u64,
    mean_ns: f64,
    median_ns: f64,
    min_ns: f64,
    samples: usize,
}

fn reduction(baseline: f64, candidate: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        (baseline - candidate) / baseline * 100.0
    }
}

/// Single-sample latency over `repetitions` runs and tracked memory of both
/// deployments. The generated program times its own entry call.
pub fn bench(bundle: &ModelBundle, artifact: &GeneratedArtifact, repetitions: usize) -> Result<BenchReport> {
    if repetitions == 0 {
        return Err(HarnessError::Config("repetitions must be at least 1".into()));
    }
    let plan = interpreter::load(bundle, DeviceInfo::new(artifact.threads))?;
    let cfg = VerifyConfig {
        n_inputs: 1,
        ..VerifyConfig::default()
    };
    let x = verification_inputs(&plan.input_info(), &cfg).remove(0);
    for _ in 0..WARMUP {
        plan.invoke(&x)?;
    }
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        let out = plan.invoke(&x)?;
        samples.push(start.elapsed().as_nanos() as u64);
        drop(out);
    }
    // Memory is reported for one invoke on a fresh plan, matching the
    // single-call counters of the generated program.
    let fresh = interpreter::load(bundle, DeviceInfo::new(artifact.threads))?;
    fresh.invoke(&x)?;
    let interp = DeploymentBench {
        latency: LatencyStats::from_samples(&samples),
        memory: fresh.counters(),
    };

    let dir = tempfile::tempdir().map_err(io_err(&artifact.executable))?;
    let in_path = dir.path().join("in.raw");
    let out_path = dir.path().join("out.raw");
    fs::write(&in_path, raw_inputs(&x)).map_err(io_err(&in_path))?;
    let reps = repetitions.to_string();
    let out = exec(
        &artifact.executable,
        &[
            in_path.as_os_str(),
            out_path.as_os_str(),
            "--stats".as_ref(),
            reps.as_ref(),
        ],
    )?;
    let stats: ProgramStats = serde_json::from_slice(&out.stdout).map_err(|e| HarnessError::Stats(e.to_string()))?;
    let generated = DeploymentBench {
        latency: LatencyStats {
            mean_ns: stats.mean_ns,
            median_ns: stats.median_ns,
            min_ns: stats.min_ns,
            samples: stats.samples,
        },
        memory: PhaseCounters {
            load_bytes: stats.load_bytes,
            configure_bytes: stats.configure_bytes,
            invoke_bytes: stats.invoke_bytes,
            peak_bytes: stats.peak_bytes,
        },
    };
    Ok(BenchReport {
        repetitions,
        latency_ratio: generated.latency.mean_ns / interp.latency.mean_ns,
        latency_reduction_pct: reduction(interp.latency.mean_ns, generated.latency.mean_ns),
        peak_reduction_pct: reduction(interp.memory.peak_bytes as f64, generated.memory.peak_bytes as f64),
        interpreter: interp,
        generated,
        interpreter_samples_ns: samples,
    })
}
