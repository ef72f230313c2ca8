//! Loading, validating, executing and writing one experiment run.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use fvqsd_core::potential::{critical_height, validate_assumption1, ValidationReport};
use serde_json::json;
use thiserror::Error;

use crate::checks;
use crate::config::{resolve, ConfigError, ExperimentConfig, RawConfig};
use crate::experiments::{potential_at, run_experiment, Outcome};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Runtime(_) => 1,
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<fvqsd_core::Error> for RunError {
    fn from(e: fvqsd_core::Error) -> Self {
        use fvqsd_core::Error as E;
        match e {
            E::Config(_) | E::Degenerate(_) | E::Unsupported(_) | E::Domain(_) => RunError::Config(e.to_string()),
            _ => RunError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for RunError {
    fn from(e: serde_json::Error) -> Self {
        RunError::Runtime(e.to_string())
    }
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig, RunError> {
    let text = fs::read_to_string(path).map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut raw = RawConfig::parse(&text)?;
    raw.apply_overrides(overrides)?;
    Ok(resolve(&raw)?)
}

/// Checks the potential against the standing assumptions at every ε used.
pub fn validate(cfg: &ExperimentConfig) -> Result<ValidationReport, RunError> {
    let mut report = None;
    for &eps in &cfg.epsilons {
        let p = potential_at(cfg, eps)?;
        let res = if p.dim() == 1 { 1024 } else { 128 };
        let r = validate_assumption1(&p, res)?;
        if !r.passed() {
            let failed: Vec<&str> = r.clauses.iter().filter(|c| !c.pass && !c.informative).map(|c| c.clause.as_str()).collect();
            return Err(RunError::Config(format!(
                "potential {} at epsilon = {eps} violates: {}",
                cfg.potential.as_str(),
                failed.join(", ")
            )));
        }
        report = Some(r);
    }
    Ok(report.expect("epsilons is never empty"))
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, RunError> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| RunError::Runtime(e.to_string()))
}

/// Validates and runs the experiment on a pool of `cfg.threads` workers
/// (0 picks the rayon default), optionally appending the self-test verdicts.
pub fn execute(cfg: &ExperimentConfig, self_test: bool) -> Result<Outcome, RunError> {
    validate(cfg)?;
    pool(cfg.threads)?.install(|| {
        let mut outcome = run_experiment(cfg)?;
        if self_test {
            outcome.verdicts.extend(checks::self_test(cfg)?);
        }
        Ok(outcome)
    })
}

pub fn self_test(cfg: &ExperimentConfig) -> Result<Vec<crate::experiments::Verdict>, RunError> {
    validate(cfg)?;
    Ok(pool(cfg.threads)?.install(|| checks::self_test(cfg))?)
}

#[derive(Debug)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub outcome: Outcome,
    /// Every file written, relative to `output_dir`, manifest last.
    pub files: Vec<String>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.outcome.passed() {
            0
        } else {
            3
        }
    }
}

/// Writes the artifacts, `config.resolved`, `verdict.json` and
/// `manifest.json` into the output directory.
pub fn write_outputs(cfg: &ExperimentConfig, outcome: &Outcome) -> Result<Vec<String>, RunError> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for a in &outcome.artifacts {
        fs::write(dir.join(&a.name), &a.bytes)?;
        files.push(a.name.clone());
    }
    fs::write(dir.join("config.resolved"), cfg.to_text())?;
    files.push("config.resolved".into());
    let mut verdict = serde_json::to_vec_pretty(&outcome.verdicts)?;
    verdict.push(b'\n');
    fs::write(dir.join("verdict.json"), verdict)?;
    files.push("verdict.json".into());

    let p = potential_at(cfg, cfg.epsilons[0])?;
    let ch = critical_height(&p, if p.dim() == 1 { 2048 } else { 128 })?;
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    files.push("manifest.json".into());
    let manifest = json!({
        "experiment": cfg.experiment.as_str(),
        "config": cfg.resolved,
        "code_version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "created_unix": created,
        "block_time": cfg.block_time,
        "critical_height": { "c_star": ch.c_star, "a_window": ch.a_window, "boundary_level": p.boundary_level() },
        "passed": outcome.passed(),
        "files": files,
        "summary": outcome.summary,
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    fs::write(dir.join("manifest.json"), bytes)?;
    Ok(files)
}

pub fn run(cfg: &ExperimentConfig, self_test: bool) -> Result<RunReport, RunError> {
    let outcome = execute(cfg, self_test)?;
    let files = write_outputs(cfg, &outcome)?;
    Ok(RunReport { output_dir: cfg.output_dir.clone(), outcome, files })
}
