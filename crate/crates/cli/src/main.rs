use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use modelless::codegen::{self, CodegenError, GeneratedArtifact, ToolchainConfig};
use modelless::fixtures::{self, FIXTURE_NAMES};
use modelless::graph::{self, GraphError, ModelBundle};
use modelless::harness::{self, VerifyConfig, DEFAULT_REPETITIONS};
use modelless::interpreter;
use modelless::kernels::DeviceInfo;
use modelless::sniffer::{self, SignatureSet};

/// Model-less deployment: turn a model bundle into a self-contained program.
#[derive(Debug, Parser)]
#[command(name = "modelless", version)]
struct Cli {
    /// Print machine-readable JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded test model as <out>/<name>.mlg and <out>/<name>.mlw.
    BuildFixture {
        name: String,
        #[arg(long, default_value_t = fixtures::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Validate a bundle and print its summary.
    Inspect { graph: PathBuf, weights: PathBuf },
    /// Run the interpreter on a raw little-endian input file.
    Run {
        graph: PathBuf,
        weights: PathBuf,
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Generate, compile and verify a standalone program.
    Codegen {
        graph: PathBuf,
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value_t = harness::DEFAULT_DELTA)]
        delta: f64,
        /// Seed of the verification inputs.
        #[arg(long, default_value_t = harness::DEFAULT_VERIFY_SEED)]
        seed: u64,
        /// JSON toolchain config: {command, flags, strip_flags}.
        #[arg(long)]
        toolchain: Option<PathBuf>,
        #[arg(long)]
        strip: bool,
    },
    /// Compare a generated program against the interpreter.
    Verify {
        graph: PathBuf,
        weights: PathBuf,
        /// Build directory or executable.
        artifact: PathBuf,
        #[arg(long, default_value_t = harness::DEFAULT_DELTA)]
        delta: f64,
        #[arg(long, default_value_t = harness::DEFAULT_VERIFY_SEED)]
        seed: u64,
        #[arg(long, default_value_t = harness::DEFAULT_N_INPUTS)]
        n_inputs: usize,
    },
    /// Latency and memory of the interpreter against a generated program.
    Bench {
        graph: PathBuf,
        weights: PathBuf,
        artifact: PathBuf,
        #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
        reps: usize,
        /// Also write per-repetition interpreter latencies as CSV.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Scan a directory, package or file for model components.
    Sniff {
        target: PathBuf,
        /// Extra signatures (JSON) added to the defaults.
        #[arg(long)]
        sigs: Option<PathBuf>,
        /// Search printable strings anywhere in the file instead.
        #[arg(long)]
        strings: bool,
    },
}

fn load(graph_path: &Path, weights_path: &Path) -> Result<ModelBundle> {
    graph::load_bundle(graph_path, weights_path)
        .with_context(|| format!("loading {} + {}", graph_path.display(), weights_path.display()))
}

fn device(threads: usize) -> Result<DeviceInfo> {
    if threads == 0 {
        bail!("--threads must be at least 1");
    }
    Ok(DeviceInfo::new(threads))
}

fn build_fixture(name: &str, seed: u64, out: &Path, json: bool) -> Result<u8> {
    let Some(bundle) = fixtures::fixture(name, seed) else {
        bail!("unknown fixture {name}; expected one of {}", FIXTURE_NAMES.join(", "));
    };
    fs::create_dir_all(out).with_context(|| out.display().to_string())?;
    let g = out.join(format!("{name}.mlg"));
    let w = out.join(format!("{name}.mlw"));
    graph::save_bundle(&bundle, &g, &w)?;
    if json {
        println!("{}", serde_json::json!({ "graph": g, "weights": w, "seed": seed }));
    } else {
        println!("wrote {} and {}", g.display(), w.display());
    }
    Ok(0)
}

fn inspect(graph_path: &Path, weights_path: &Path, json: bool) -> Result<u8> {
    let bundle = load(graph_path, weights_path)?;
    let report = graph::validate(&bundle);
    if json {
        print!("{}", graph::summarize(&bundle));
    } else {
        let g = &bundle.graph;
        println!(
            "{} tensors, {} operators, inputs {:?}, outputs {:?}",
            g.tensors.len(),
            g.operators.len(),
            g.inputs,
            g.outputs
        );
        for (i, node) in g.operators.iter().enumerate() {
            println!(
                "  {i:>3} {:<24} {:?} -> {:?}",
                node.op.name(),
                node.inputs,
                node.outputs
            );
        }
        println!("{report}");
    }
    if !report.is_valid() {
        if json {
            eprintln!("{report}");
        }
        return Ok(1);
    }
    Ok(0)
}

fn run(graph_path: &Path, weights_path: &Path, input: &Path, output: &Path, threads: usize, json: bool) -> Result<u8> {
    let bundle = load(graph_path, weights_path)?;
    let plan = interpreter::load(&bundle, device(threads)?)?;
    let raw = fs::read(input).with_context(|| input.display().to_string())?;
    let out = plan.invoke_raw(&raw)?;
    fs::write(output, &out).with_context(|| output.display().to_string())?;
    if json {
        println!(
            "{}",
            serde_json::json!({ "output": output, "bytes": out.len(), "counters": plan.counters() })
        );
    } else {
        println!("wrote {} bytes to {}", out.len(), output.display());
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn codegen_cmd(
    graph_path: &Path,
    weights_path: &Path,
    out: &Path,
    threads: usize,
    cfg: VerifyConfig,
    toolchain: Option<&Path>,
    strip: bool,
    json: bool,
) -> Result<u8> {
    cfg.check()?;
    let bundle = load(graph_path, weights_path)?;
    let tc = match toolchain {
        Some(p) => ToolchainConfig::from_json_file(p)?,
        None => ToolchainConfig::default(),
    }
    .stripped(strip);
    let (artifact, manifest, report) = codegen::pipeline(&bundle, device(threads)?, &cfg, &tc, out)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&manifest)?);
    } else {
        println!("executable {}", artifact.executable.display());
        println!(
            "candidates {} of {} (unpruned {}), max_error {:e}, {}",
            manifest.candidates_evaluated,
            manifest.class_product,
            manifest.unpruned_candidates,
            report.max_error,
            if report.pass { "pass" } else { "FAIL" }
        );
    }
    Ok(if report.pass { 0 } else { 1 })
}

fn verify(graph_path: &Path, weights_path: &Path, artifact: &Path, cfg: VerifyConfig, json: bool) -> Result<u8> {
    cfg.check()?;
    let bundle = load(graph_path, weights_path)?;
    let artifact = GeneratedArtifact::open(artifact)?;
    let report = harness::verify(&bundle, &artifact, &cfg)?;
    if json {
        print!("{}", report.to_json());
    } else {
        println!(
            "{} max_error {:e} over {} inputs (delta {:e})",
            if report.pass { "pass" } else { "FAIL" },
            report.max_error,
            report.n_inputs,
            report.delta
        );
    }
    Ok(if report.pass { 0 } else { 1 })
}

fn bench(
    graph_path: &Path,
    weights_path: &Path,
    artifact: &Path,
    reps: usize,
    samples: Option<&Path>,
    json: bool,
) -> Result<u8> {
    let bundle = load(graph_path, weights_path)?;
    let artifact = GeneratedArtifact::open(artifact)?;
    let report = harness::bench(&bundle, &artifact, reps)?;
    if let Some(p) = samples {
        fs::write(p, report.samples_csv()).with_context(|| p.display().to_string())?;
    }
    if json {
        print!("{}", report.to_json());
    } else {
        let (i, g) = (&report.interpreter, &report.generated);
        println!("{:<12} {:>14} {:>14}", "", "interpreter", "generated");
        println!(
            "{:<12} {:>14.0} {:>14.0}",
            "mean ns", i.latency.mean_ns, g.latency.mean_ns
        );
        println!(
            "{:<12} {:>14} {:>14}",
            "load B", i.memory.load_bytes, g.memory.load_bytes
        );
        println!(
            "{:<12} {:>14} {:>14}",
            "configure B", i.memory.configure_bytes, g.memory.configure_bytes
        );
        println!(
            "{:<12} {:>14} {:>14}",
            "invoke B", i.memory.invoke_bytes, g.memory.invoke_bytes
        );
        println!(
            "{:<12} {:>14} {:>14}",
            "peak B", i.memory.peak_bytes, g.memory.peak_bytes
        );
        println!(
            "latency ratio {:.3} ({:.1}% faster), peak {:.1}% lower",
            report.latency_ratio, report.latency_reduction_pct, report.peak_reduction_pct
        );
    }
    Ok(0)
}

fn sniff(target: &Path, extra: Option<&Path>, strings: bool, json: bool) -> Result<u8> {
    let mut sigs = SignatureSet::default();
    if let Some(p) = extra {
        sigs.extend(&SignatureSet::from_json_file(p)?);
    }
    let report = if strings {
        sniffer::scan_binary_strings(target, &sigs)?
    } else {
        sniffer::scan(target, &sigs)?
    };
    if json {
        print!("{}", report.to_json());
    } else {
        for f in &report.findings {
            match f.offset {
                Some(off) => println!("{} @{off}: {:?} {}", f.path, f.kind, f.token),
                None => println!("{}: {:?} {}", f.path, f.kind, f.token),
            }
        }
        println!("{} findings in {} files", report.findings.len(), report.files_scanned);
    }
    Ok(report.exit_code() as u8)
}

fn dispatch(cli: Cli) -> Result<u8> {
    let json = cli.json;
    match cli.command {
        Command::BuildFixture { name, seed, out } => build_fixture(&name, seed, &out, json),
        Command::Inspect { graph, weights } => inspect(&graph, &weights, json),
        Command::Run {
            graph,
            weights,
            input,
            output,
            threads,
        } => run(&graph, &weights, &input, &output, threads, json),
        Command::Codegen {
            graph,
            weights,
            out,
            threads,
            delta,
            seed,
            toolchain,
            strip,
        } => {
            let cfg = VerifyConfig {
                delta,
                seed,
                ..VerifyConfig::default()
            };
            codegen_cmd(&graph, &weights, &out, threads, cfg, toolchain.as_deref(), strip, json)
        }
        Command::Verify {
            graph,
            weights,
            artifact,
            delta,
            seed,
            n_inputs,
        } => {
            let cfg = VerifyConfig {
                delta,
                seed,
                n_inputs,
                ..VerifyConfig::default()
            };
            verify(&graph, &weights, &artifact, cfg, json)
        }
        Command::Bench {
            graph,
            weights,
            artifact,
            reps,
            samples,
        } => bench(&graph, &weights, &artifact, reps, samples.as_deref(), json),
        Command::Sniff { target, sigs, strings } => sniff(&target, sigs.as_deref(), strings, json),
    }
}

/// Invalid models and failed searches are domain failures; everything else
/// (missing files, toolchain, bad flags) is an environment error.
fn error_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(GraphError::Invalid(_)) = cause.downcast_ref::<GraphError>() {
            return 1;
        }
        if let Some(CodegenError::SearchExhausted { .. }) = cause.downcast_ref::<CodegenError>() {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(error_code(&err))
        }
    }
}
