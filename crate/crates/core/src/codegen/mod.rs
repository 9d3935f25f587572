//! Model-to-program compiler.
//!
//! The pipeline selects one computing unit per operator, resolves the known
//! parameters from the builtin options, searches the unknown status against
//! the interpreter as oracle, and emits a standalone Rust program whose
//! driver calls the same kernel template sources with literal geometries and
//! whose weights are embedded as exact bit patterns. The program never reads
//! a model file.

mod analyze;
mod emit;
mod extract;
mod search;
mod toolchain;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::graph::{GraphError, ModelBundle, OpId};
use crate::harness::{self, DiffReport, HarnessError, VerifyConfig};
use crate::interpreter::{self, InterpError};
use crate::kernels::{DeviceInfo, KernelError, Registry};

pub use analyze::{analyze_config, ConfigAnalysis, OpBinding, Operand};
pub use emit::{emit_source, ElemKind, EmissionPlan, EmitCall, EmitIo, EmitWeight, SourceFiles, FORBIDDEN_TOKENS};
pub use extract::{extract_units, ExtractionResult};
pub use search::{build_classes, search_status, ConfigurationClass, SearchOutcome, StatusAssignment};
pub use toolchain::{compile, ToolchainConfig};

#[derive(Debug, thiserror::Error)]
pub enum CodegenError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("operator {index} ({op}): {source}")]
    Operator {
        index: usize,
        op: OpId,
        #[source]
        source: KernelError,
    },
    #[error("dangling weight: tensor {tensor} refers to missing key {key}")]
    DanglingWeight { tensor: usize, key: u32 },
    #[error(transparent)]
    Oracle(#[from] InterpError),
    #[error(
        "status search exhausted after {candidates} candidates: no assignment within delta {delta}, best diff {best_diff}"
    )]
    SearchExhausted {
        candidates: u64,
        delta: f64,
        best_diff: f64,
    },
    #[error("unresolved template_id {0}")]
    UnresolvedTemplate(String),
    #[error("toolchain not found: {0}")]
    ToolchainNotFound(String),
    #[error("compile failed ({status}):\n{stderr}")]
    CompileFailed { status: String, stderr: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Harness(#[from] Box<HarnessError>),
}

pub type Result<T> = std::result::Result<T, CodegenError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CodegenError + '_ {
    move |source| CodegenError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Machine-readable record of one build. Paths are relative to the output
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildManifest {
    pub plan_digest: String,
    pub seed: u64,
    pub delta: f64,
    pub n_inputs: usize,
    pub candidates_evaluated: u64,
    pub unpruned_candidates: u64,
    pub class_product: u64,
    pub max_diff: f64,
    pub sources: Vec<String>,
    pub executable: String,
    pub threads: usize,
    pub strip: bool,
}

/// Emitted sources plus the compiled executable.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedArtifact {
    pub dir: PathBuf,
    pub sources: Vec<PathBuf>,
    pub executable: PathBuf,
    pub plan_digest: String,
    pub threads: usize,
}

impl GeneratedArtifact {
    /// Opens a build directory written by [`pipeline`], or wraps a bare
    /// executable path (single-threaded).
    pub fn open(path: &Path) -> Result<Self> {
        if path.is_file() {
            return Ok(Self {
                dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
                sources: Vec::new(),
                executable: path.to_path_buf(),
                plan_digest: String::new(),
                threads: 1,
            });
        }
        let manifest = read_manifest(path)?;
        Ok(Self {
            dir: path.to_path_buf(),
            sources: manifest.sources.iter().map(|s| path.join(s)).collect(),
            executable: path.join(&manifest.executable),
            plan_digest: manifest.plan_digest,
            threads: manifest.threads,
        })
    }
}

pub fn read_manifest(dir: &Path) -> Result<BuildManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read(&path).map_err(io_err(&path))?;
    serde_json::from_slice(&text).map_err(|e| CodegenError::Manifest(e.to_string()))
}

/// Content hash of the emitted sources.
pub fn plan_digest(sources: &SourceFiles) -> String {
    let mut h = Sha256::new();
    for (name, text) in sources.files() {
        h.update(name.as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Result of the planning stages, before any file is written.
#[derive(Debug, Clone)]
pub struct PlannedBuild {
    pub extraction: ExtractionResult,
    pub analysis: ConfigAnalysis,
    pub search: SearchOutcome,
    pub emission: EmissionPlan,
}

/// Extract, analyze, search and plan emission with a given registry.
pub fn plan_with(
    bundle: &ModelBundle,
    device: DeviceInfo,
    cfg: &VerifyConfig,
    registry: &Registry,
) -> Result<PlannedBuild> {
    let report = crate::graph::validate(bundle);
    if !report.is_valid() {
        return Err(GraphError::Invalid(report).into());
    }
    let extraction = extract_units(&bundle.graph, device, registry)?;
    let analysis = analyze_config(bundle, &extraction)?;
    let oracle = interpreter::load(bundle, device)?;
    let search = search_status(bundle, &extraction, &analysis, &oracle, cfg)?;
    let emission = EmissionPlan::build(bundle, &extraction, &analysis, &search.assignment)?;
    Ok(PlannedBuild {
        extraction,
        analysis,
        search,
        emission,
    })
}

pub fn plan(bundle: &ModelBundle, device: DeviceInfo, cfg: &VerifyConfig) -> Result<PlannedBuild> {
    plan_with(bundle, device, cfg, &Registry::builtin())
}

/// Emits and compiles an emission plan into `out_dir` (`src/` and `deploy/`).
pub fn build(emission: &EmissionPlan, out_dir: &Path, toolchain: &ToolchainConfig) -> Result<GeneratedArtifact> {
    let sources = emit_source(emission)?;
    let src_dir = out_dir.join("src");
    fs::create_dir_all(&src_dir).map_err(io_err(&src_dir))?;
    let mut paths = Vec::new();
    for (name, text) in sources.files() {
        let p = src_dir.join(name);
        fs::write(&p, text).map_err(io_err(&p))?;
        paths.push(p);
    }
    let executable = out_dir.join("deploy").join("app");
    compile(&src_dir, &executable, toolchain)?;
    Ok(GeneratedArtifact {
        dir: out_dir.to_path_buf(),
        sources: paths,
        executable,
        plan_digest: plan_digest(&sources),
        threads: emission.threads,
    })
}

/// Full pipeline: plan, emit, compile, verify the executable against the
/// interpreter and write the build manifest.
pub fn pipeline(
    bundle: &ModelBundle,
    device: DeviceInfo,
    cfg: &VerifyConfig,
    toolchain: &ToolchainConfig,
    out_dir: &Path,
) -> Result<(GeneratedArtifact, BuildManifest, DiffReport)> {
    let planned = plan(bundle, device, cfg)?;
    let artifact = build(&planned.emission, out_dir, toolchain)?;
    let report = harness::verify(bundle, &artifact, cfg).map_err(Box::new)?;
    let rel = |p: &Path| {
        p.strip_prefix(out_dir)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    };
    let manifest = BuildManifest {
        plan_digest: artifact.plan_digest.clone(),
        seed: cfg.seed,
        delta: cfg.delta,
        n_inputs: cfg.n_inputs,
        candidates_evaluated: planned.search.candidates_evaluated,
        unpruned_candidates: planned.search.unpruned_candidates,
        class_product: planned.search.class_product,
        max_diff: report.max_error,
        sources: artifact.sources.iter().map(|p| rel(p)).collect(),
        executable: rel(&artifact.executable),
        threads: device.threads,
        strip: toolchain.strip,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok((artifact, manifest, report))
}
