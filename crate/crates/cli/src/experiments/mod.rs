//! The seven configured experiments. Each returns its CSV artifacts and the
//! verdicts against its bundled thresholds; writing them is the runner's job.

use std::io::Write;

use fvqsd_core::potential::{builtin_potential, critical_height, PotentialSpec};
use fvqsd_core::Result;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind, StartPoint};

mod boundary;
mod chaos;
mod contraction;
mod exit_scaling;
mod lyapunov_decay;
mod qsd_accuracy;
mod uniform_survival;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub criterion_id: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Verdict {
    pub fn new(id: &str, value: f64, threshold: f64, pass: bool, detail: impl Into<String>) -> Self {
        Verdict { criterion_id: id.to_string(), value, threshold, pass, detail: detail.into() }
    }
}

#[derive(Clone, Debug)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub verdicts: Vec<Verdict>,
    /// Headline numbers copied into the manifest.
    pub summary: serde_json::Value,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.experiment {
        ExperimentKind::QsdAccuracy => qsd_accuracy::run(cfg),
        ExperimentKind::ContractionVsN => contraction::run(cfg),
        ExperimentKind::ChaosVsN => chaos::run(cfg),
        ExperimentKind::BoundaryFraction => boundary::run(cfg),
        ExperimentKind::ExitScaling => exit_scaling::run(cfg),
        ExperimentKind::UniformSurvival => uniform_survival::run(cfg),
        ExperimentKind::LyapunovDecay => lyapunov_decay::run(cfg),
    }
}

pub fn potential_at(cfg: &ExperimentConfig, epsilon: f64) -> Result<PotentialSpec> {
    builtin_potential(cfg.potential.as_str(), &cfg.potential_params, epsilon)
}

/// Resolves a start point, taking the lowest lattice minimum for `global_min`.
pub fn start_point(p: &PotentialSpec, start: &StartPoint) -> Result<Vec<f64>> {
    match start {
        StartPoint::At(x) => {
            if x.len() != p.dim() {
                return Err(fvqsd_core::Error::Config(format!("start point {x:?} has dimension {}, expected {}", x.len(), p.dim())));
            }
            if !p.domain().inside(x) {
                return Err(fvqsd_core::Error::Domain(format!("start point {x:?} lies outside D")));
            }
            Ok(x.clone())
        }
        StartPoint::GlobalMin => {
            let res = if p.dim() == 1 { 4096 } else { 256 };
            Ok(critical_height(p, res)?.minima.swap_remove(0))
        }
    }
}

/// Replica ids for the `k`-th sweep point, so sweeps never share streams.
pub(crate) fn replica_base(k: usize) -> u64 {
    k as u64 * 1_000_000
}

pub(crate) struct Csv(Vec<u8>);

impl Csv {
    pub fn new(header: &str) -> Self {
        let mut buf = Vec::new();
        writeln!(buf, "{header}").expect("write to memory");
        Csv(buf)
    }

    pub fn row(&mut self, fields: &[String]) {
        writeln!(self.0, "{}", fields.join(",")).expect("write to memory");
    }

    pub fn done(self, name: &str) -> Artifact {
        Artifact { name: name.to_string(), bytes: self.0 }
    }
}

/// Formats an optional time, empty when absent.
pub(crate) fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[macro_export]
#[doc(hidden)]
macro_rules! fields {
    ($($e:expr),* $(,)?) => { &[$($e.to_string()),*] };
}
