//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

#[path = "common/kernel_checks.rs"]
mod kernel_checks;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use modelless::codegen::{self, build, plan, plan_with, CodegenError, ToolchainConfig};
use modelless::fixtures::{self, DEFAULT_SEED, FIXTURE_NAMES};
use modelless::graph::{save_bundle, BuiltinOp, OpId};
use modelless::harness::{self, VerifyConfig, DEFAULT_REPETITIONS};
use modelless::interpreter::HiddenStatusTable;
use modelless::kernels::{DeviceInfo, Registry};
use modelless::sniffer::{self, SignatureSet};

const TIME_BUDGET: Duration = Duration::from_secs(120);
const MAX_LATENCY_RATIO: f64 = 1.10;
const PERTURBATION: f32 = 0.1;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

fn tool(strip: bool) -> ToolchainConfig {
    ToolchainConfig::default().stripped(strip)
}

fn zero_error(root: &Path) -> Outcome {
    let cfg = VerifyConfig::default();
    let start = Instant::now();
    let mut parts = Vec::new();
    for name in FIXTURE_NAMES {
        let bundle = fixtures::fixture(name, DEFAULT_SEED).unwrap();
        let (_, _, report) =
            codegen::pipeline(&bundle, DeviceInfo::new(1), &cfg, &tool(false), &root.join(name)).map_err(e)?;
        check(report.n_inputs == 100, format!("{name}: {} inputs", report.n_inputs))?;
        check(
            report.max_error == 0.0,
            format!("{name}: max_error {}", report.max_error),
        )?;
        parts.push(format!("{name}=0"));
    }
    let elapsed = start.elapsed();
    check(elapsed < TIME_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!("{} in {:.1}s", parts.join(" "), elapsed.as_secs_f64()))
}

fn kernel_oracles() -> Outcome {
    let hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (name, f) in kernel_checks::ORACLE_CHECKS {
        if panic::catch_unwind(AssertUnwindSafe(f)).is_err() {
            failed.push(*name);
        }
    }
    panic::set_hook(hook);
    check(failed.is_empty(), format!("failed: {}", failed.join(", ")))?;
    Ok(format!("{} checks", kernel_checks::ORACLE_CHECKS.len()))
}

fn dynamic_configuration() -> Outcome {
    let bundle = fixtures::lenet(DEFAULT_SEED);
    let device = DeviceInfo::new(1);
    let cfg = VerifyConfig::default();
    let planned = plan(&bundle, device, &cfg).map_err(e)?;
    let s = &planned.search;
    let fc = OpId::builtin(BuiltinOp::FullyConnected);
    let shared = s
        .classes
        .iter()
        .any(|c| c.members.len() >= 2 && c.members.iter().all(|&m| bundle.graph.operators[m].op == fc));
    check(shared, "no class shared by fully_connected operators")?;
    check(
        s.candidates_evaluated <= s.class_product && s.class_product < s.unpruned_candidates,
        format!(
            "{} / {} / {}",
            s.candidates_evaluated, s.class_product, s.unpruned_candidates
        ),
    )?;
    let hidden = HiddenStatusTable::default();
    for (i, unit) in planned.extraction.units.iter().enumerate() {
        let truth = hidden.resolve(unit).map_err(e)?;
        for slot in unit.status_schema.iter().filter(|s| s.value_changing) {
            let got = s.assignment.per_op[i].get(slot.name);
            check(got == truth.get(slot.name), format!("op {i} {}: {got:?}", slot.name))?;
        }
    }

    let mut narrowed = Registry::empty();
    for unit in Registry::builtin().units() {
        let mut unit = unit.clone();
        if unit.key.op == fc {
            for slot in unit.status_schema.iter_mut().filter(|s| s.name == "weights_layout") {
                slot.domain = vec!["transposed"];
            }
        }
        let key = unit.key.clone();
        match key.op {
            OpId::Custom(ref name) => narrowed.register_custom(name, unit),
            OpId::Builtin(_) => narrowed.register_builtin(key, unit),
        }
        .map_err(e)?;
    }
    match plan_with(&bundle, device, &cfg, &narrowed) {
        Err(err @ CodegenError::SearchExhausted { .. }) => {
            check(err.to_string().contains("status search exhausted"), e(&err))?
        }
        Err(other) => return Err(format!("unexpected error: {other}")),
        Ok(_) => return Err("narrowed registry found an assignment".into()),
    }
    Ok(format!(
        "evaluated {} <= classes {} < unpruned {}",
        s.candidates_evaluated, s.class_product, s.unpruned_candidates
    ))
}

fn benches(root: &Path) -> Result<Vec<(&'static str, harness::BenchReport)>, String> {
    FIXTURE_NAMES
        .iter()
        .map(|&name| {
            let bundle = fixtures::fixture(name, DEFAULT_SEED).unwrap();
            let artifact = codegen::GeneratedArtifact::open(&root.join(name)).map_err(e)?;
            let report = harness::bench(&bundle, &artifact, DEFAULT_REPETITIONS).map_err(e)?;
            Ok((name, report))
        })
        .collect()
}

fn memory_pattern(reports: &[(&str, harness::BenchReport)]) -> Outcome {
    let mut parts = Vec::new();
    for (name, r) in reports {
        let g = &r.generated.memory;
        let i = &r.interpreter.memory;
        check(g.load_bytes == 0 && g.configure_bytes == 0, format!("{name}: {g:?}"))?;
        check(
            g.peak_bytes <= i.peak_bytes,
            format!("{name}: peak {} > {}", g.peak_bytes, i.peak_bytes),
        )?;
        parts.push(format!("{name} -{:.1}%", r.peak_reduction_pct));
    }
    Ok(format!("peak {}", parts.join(" ")))
}

fn latency(reports: &[(&str, harness::BenchReport)]) -> Outcome {
    let mut parts = Vec::new();
    let mut worst = Vec::new();
    for (name, r) in reports {
        check(
            r.repetitions == DEFAULT_REPETITIONS,
            format!("{name}: {} reps", r.repetitions),
        )?;
        parts.push(format!("{name} x{:.3}", r.latency_ratio));
        if r.latency_ratio > MAX_LATENCY_RATIO {
            worst.push(*name);
        }
    }
    check(
        worst.is_empty(),
        format!("ratio above {MAX_LATENCY_RATIO}: {}", parts.join(" ")),
    )?;
    Ok(parts.join(" "))
}

fn sniffing(root: &Path) -> Outcome {
    let sigs = SignatureSet::default();
    let baseline = root.join("baseline");
    fs::create_dir_all(&baseline).map_err(e)?;
    let bundle = fixtures::lenet(DEFAULT_SEED);
    save_bundle(&bundle, baseline.join("model.mlg"), baseline.join("model.mlw")).map_err(e)?;
    let found = sniffer::scan(&baseline, &sigs).map_err(e)?;
    let kinds: Vec<_> = found.findings.iter().map(|f| f.kind).collect();
    check(
        found.findings.len() >= 2
            && kinds.contains(&sniffer::FindingKind::Filename)
            && kinds.contains(&sniffer::FindingKind::Magic),
        format!("baseline findings {:?}", found.findings),
    )?;

    let out = root.join("stripped");
    let planned = plan(&bundle, DeviceInfo::new(1), &VerifyConfig::default()).map_err(e)?;
    let artifact = build(&planned.emission, &out, &tool(true)).map_err(e)?;
    let deploy = artifact.executable.parent().unwrap();
    let dir_scan = sniffer::scan(deploy, &sigs).map_err(e)?;
    check(
        dir_scan.is_clean(),
        format!("deployment findings {:?}", dir_scan.findings),
    )?;
    let strings = sniffer::scan_binary_strings(&artifact.executable, &sigs).map_err(e)?;
    check(strings.is_clean(), format!("binary findings {:?}", strings.findings))?;

    let corpus = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/plain_corpus");
    let plain = sniffer::scan(&corpus, &sigs).map_err(e)?;
    check(
        plain.files_scanned == 20,
        format!("corpus has {} files", plain.files_scanned),
    )?;
    check(plain.is_clean(), format!("false positives {:?}", plain.findings))?;
    Ok(format!(
        "baseline {} findings, generated 0, plain corpus 0/{}",
        found.findings.len(),
        plain.files_scanned
    ))
}

fn one_run(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let cfg = VerifyConfig {
        n_inputs: 20,
        ..VerifyConfig::default()
    };
    fs::create_dir_all(dir).map_err(e)?;
    let mut artifacts = Vec::new();
    for name in FIXTURE_NAMES {
        let bundle = fixtures::fixture(name, DEFAULT_SEED).unwrap();
        let (g, w) = (dir.join(format!("{name}.mlg")), dir.join(format!("{name}.mlw")));
        save_bundle(&bundle, &g, &w).map_err(e)?;
        let loaded = modelless::graph::load_bundle(&g, &w).map_err(e)?;
        check(loaded == bundle, format!("{name}: round trip changed the bundle"))?;
        let (artifact, _, report) =
            codegen::pipeline(&bundle, DeviceInfo::new(1), &cfg, &tool(false), &dir.join(name)).map_err(e)?;
        artifacts.push((format!("{name}.mlg"), fs::read(&g).map_err(e)?));
        artifacts.push((format!("{name}.mlw"), fs::read(&w).map_err(e)?));
        artifacts.push((format!("{name} digest"), artifact.plan_digest.into_bytes()));
        artifacts.push((format!("{name} report"), report.to_json().into_bytes()));
    }
    Ok(artifacts)
}

fn determinism(root: &Path) -> Outcome {
    let (a_dir, b_dir) = (root.join("run_a"), root.join("run_b"));
    let a = one_run(&a_dir)?;
    let b = one_run(&b_dir)?;
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        check(x == y, format!("{name} differs"))?;
    }
    Ok(format!("{} artifacts identical", a.len()))
}

fn mutation_sensitivity(root: &Path) -> Outcome {
    let cfg = VerifyConfig::default();
    let mut parts = Vec::new();
    for name in ["mlp", "lenet"] {
        let bundle = fixtures::fixture(name, DEFAULT_SEED).unwrap();
        let mut planned = plan(&bundle, DeviceInfo::new(1), &cfg).map_err(e)?;
        check(
            planned.emission.perturb_weight(0, 0, PERTURBATION),
            "no weight to perturb",
        )?;
        let artifact = build(&planned.emission, &root.join(format!("mut_{name}")), &tool(false)).map_err(e)?;
        let report = harness::verify(&bundle, &artifact, &cfg).map_err(e)?;
        check(
            !report.pass && report.max_error > cfg.delta,
            format!("{name}: max_error {}", report.max_error),
        )?;
        parts.push(format!("{name} max_error {:.3e}", report.max_error));
    }
    Ok(parts.join(", "))
}

fn main() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let root = tmp.path();
    let mut failures = 0;
    let mut report = |n: usize, title: &str, outcome: Outcome| match outcome {
        Ok(detail) => println!("PASS {n} {title}: {detail}"),
        Err(why) => {
            failures += 1;
            println!("FAIL {n} {title}: {why}");
        }
    };

    let built = zero_error(&root.join("fixtures"));
    let have_builds = built.is_ok();
    report(1, "zero translation error", built);
    report(2, "kernel oracle equivalence", kernel_oracles());
    report(3, "dynamic configuration", dynamic_configuration());
    let reports = if have_builds {
        benches(&root.join("fixtures"))
    } else {
        Err("fixture builds unavailable".into())
    };
    match &reports {
        Ok(r) => {
            report(4, "memory pattern", memory_pattern(r));
            report(5, "latency", latency(r));
        }
        Err(why) => {
            report(4, "memory pattern", Err(why.clone()));
            report(5, "latency", Err(why.clone()));
        }
    }
    report(6, "sniffing resistance", sniffing(root));
    report(7, "determinism and round trip", determinism(root));
    report(8, "mutation sensitivity", mutation_sensitivity(root));

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
