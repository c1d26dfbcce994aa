//! Configuration-driven runner: parse a TOML experiment file, run it, and
//! write CSV traces, a manifest and optional SVG plots.

pub mod config;
pub mod plot;
pub mod runner;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use degsemi::trace::{nonincreasing, strictly_decreasing, ConvergenceTrace};
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{Assertion, Check, ExperimentConfig, ExperimentKind};

/// Output directory override.
pub const OUT_ENV: &str = "DEGSEMI_OUT";
pub const DEFAULT_SEED: u64 = 20240607;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("experiment failed: {0}")]
    ExperimentFailed(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ConfigInvalid(_) => 2,
            CliError::ExperimentFailed(_) | CliError::Io(_) => 1,
        }
    }
}

/// Command-line overrides of a run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub plot: bool,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssertionResult {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub tool_version: String,
    pub seed: u64,
    pub wall_clock_seconds: f64,
    pub passed: bool,
    pub files: Vec<String>,
    pub notes: std::collections::BTreeMap<String, String>,
    pub assertions: Vec<AssertionResult>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
    pub traces: Vec<ConvergenceTrace>,
}

impl RunReport {
    pub fn first_failure(&self) -> Option<&AssertionResult> {
        self.manifest.assertions.iter().find(|a| !a.passed)
    }
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn check_series(check: Check, value: Option<f64>, v: &[f64]) -> (bool, String) {
    let last = v.last().copied().unwrap_or(f64::NAN);
    let bound = value.unwrap_or(f64::NAN);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    match check {
        Check::FinalBelow => (last <= bound, format!("final {last:e}")),
        Check::MaxBelow => (max <= bound, format!("max {max:e}")),
        Check::FinalAbove => (last >= bound, format!("final {last:e}")),
        Check::MinAbove => (min >= bound, format!("min {min:e}")),
        Check::Nonincreasing => (nonincreasing(v), format!("values [{}]", sci(v))),
        Check::StrictlyDecreasing => (strictly_decreasing(v), format!("values [{}]", sci(v))),
    }
}

/// Evaluate one assertion over every trace carrying its metric.
pub fn evaluate_assertion(a: &Assertion, traces: &[ConvergenceTrace]) -> AssertionResult {
    let mut details = Vec::new();
    let mut passed = true;
    let mut found = false;
    for t in traces {
        if a.trace.as_deref().is_some_and(|name| name != t.name) {
            continue;
        }
        if let Some(v) = t.get(&a.metric) {
            found = true;
            let (ok, d) = check_series(a.check, a.value, v);
            passed &= ok;
            details.push(format!("{}: {d}", t.name));
        }
    }
    if !found {
        return AssertionResult {
            label: a.label(),
            passed: false,
            detail: "metric not present in any trace".into(),
        };
    }
    AssertionResult {
        label: a.label(),
        passed,
        detail: details.join("; "),
    }
}

fn config_hash(text: &str, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    h.update(seed.to_le_bytes());
    degsemi::trace::hex(&h.finalize()[..8])
}

fn output_dir(cfg: &ExperimentConfig, opts: &RunOptions) -> PathBuf {
    opts.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("degsemi-out").join(cfg.experiment.name()))
}

/// Run the configuration at `path`. Failed assertions are reported in the
/// returned manifest; configuration and experiment errors come back as `Err`.
pub fn run_config(path: &Path, opts: &RunOptions) -> Result<RunReport, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    run_config_text(&text, base, opts)
}

pub fn run_config_text(text: &str, base: &Path, opts: &RunOptions) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let cfg = ExperimentConfig::parse(text)?;
    let params = cfg.parameters()?;
    let seed = opts.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let outcome = runner::run_experiment(&params, seed, base)?;

    let out_dir = output_dir(&cfg, opts);
    std::fs::create_dir_all(&out_dir).map_err(|e| io(&out_dir, e))?;
    let mut files = Vec::new();
    let plot = cfg.plot || opts.plot;
    for t in &outcome.traces {
        let p = out_dir.join(format!("{}.csv", t.name));
        std::fs::write(&p, t.to_csv()).map_err(|e| io(&p, e))?;
        files.push(format!("{}.csv", t.name));
        if plot {
            let p = out_dir.join(format!("{}.svg", t.name));
            plot::emit_svg_plot(t, &p)?;
            files.push(format!("{}.svg", t.name));
        }
    }
    for (stem, content) in &outcome.tables {
        let p = out_dir.join(format!("{stem}.csv"));
        std::fs::write(&p, content).map_err(|e| io(&p, e))?;
        files.push(format!("{stem}.csv"));
    }
    let assertions: Vec<AssertionResult> = cfg.assertions.iter().map(|a| evaluate_assertion(a, &outcome.traces)).collect();
    let manifest = RunManifest {
        experiment: cfg.experiment.name().into(),
        config_hash: config_hash(text, seed),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        passed: assertions.iter().all(|a| a.passed),
        files,
        notes: outcome.notes.into_iter().collect(),
        assertions,
    };
    let p = out_dir.join("manifest.toml");
    let body = toml::to_string(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(&p, body).map_err(|e| io(&p, e))?;
    Ok(RunReport {
        out_dir,
        manifest,
        traces: outcome.traces,
    })
}

/// Experiment kinds and their keys, in a fixed order.
pub fn list_experiments() -> String {
    let mut s = String::new();
    for (kind, doc) in config::key_docs() {
        let _ = writeln!(s, "{}", kind.name());
        for line in doc.lines() {
            let _ = writeln!(s, "    {}", line.trim());
        }
    }
    debug_assert_eq!(config::key_docs().len(), ExperimentKind::ALL.len());
    s
}
