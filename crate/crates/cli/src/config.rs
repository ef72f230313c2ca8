//! Flat `key=value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use fvqsd_core::potential::BuiltinPotential;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    CommandLine,
    Default,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::CommandLine => write!(f, "command line"),
            Origin::Default => write!(f, "default"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{origin}: {message}")]
    At { origin: Origin, message: String },
    #[error("{0}")]
    General(String),
}

fn at(origin: Origin, message: impl Into<String>) -> ConfigError {
    ConfigError::At { origin, message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    QsdAccuracy,
    ContractionVsN,
    ChaosVsN,
    BoundaryFraction,
    ExitScaling,
    UniformSurvival,
    LyapunovDecay,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::QsdAccuracy,
        ExperimentKind::ContractionVsN,
        ExperimentKind::ChaosVsN,
        ExperimentKind::BoundaryFraction,
        ExperimentKind::ExitScaling,
        ExperimentKind::UniformSurvival,
        ExperimentKind::LyapunovDecay,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::QsdAccuracy => "qsd_accuracy",
            ExperimentKind::ContractionVsN => "contraction_vs_N",
            ExperimentKind::ChaosVsN => "chaos_vs_N",
            ExperimentKind::BoundaryFraction => "boundary_fraction",
            ExperimentKind::ExitScaling => "exit_scaling",
            ExperimentKind::UniformSurvival => "uniform_survival",
            ExperimentKind::LyapunovDecay => "lyapunov_decay",
        }
    }

    /// Keys the experiment reads, with their defaults. The defaults reproduce
    /// the acceptance setup of each experiment.
    pub fn defaults(self) -> &'static [(&'static str, &'static str)] {
        match self {
            ExperimentKind::QsdAccuracy => &[
                ("potential", "double_well_1d"),
                ("epsilon", "0.5"),
                ("n_particles", "1000"),
                ("dt", "0.001"),
                ("burn_in", "100"),
                ("horizon", "200"),
                ("cadence", "10"),
                ("oracle_resolution", "2048"),
                ("histogram_coarsen", "4"),
                ("x_start", "global_min"),
                ("threshold.tv", "0.05"),
            ],
            ExperimentKind::ContractionVsN => &[
                ("potential", "double_well_1d"),
                ("epsilon", "0.5"),
                ("n_particles", "10,50,250"),
                ("replicas", "100"),
                ("dt", "0.01"),
                ("horizon", "100"),
                ("block_time", "5"),
                ("x_start", "-1"),
                ("y_start", "1"),
                ("alpha", "0.1"),
                ("beta", "0.01"),
                ("c3", "1"),
                ("threshold.median_ratio", "2"),
                ("threshold.sigmas", "3"),
            ],
            ExperimentKind::ChaosVsN => &[
                ("potential", "double_well_1d"),
                ("epsilon", "0.5"),
                ("n_particles", "16,64,256,1024"),
                ("replicas", "100"),
                ("dt", "0.001"),
                ("times", "5"),
                ("x_start", "-1"),
                ("oracle_resolution", "2048"),
                ("threshold.slope", "-0.3"),
                ("threshold.growth", "3"),
            ],
            ExperimentKind::BoundaryFraction => &[
                ("potential", "double_well_1d"),
                ("epsilon", "0.5"),
                ("n_particles", "1000"),
                ("dt", "0.001"),
                ("burn_in", "20"),
                ("snapshots", "500"),
                ("snapshot_interval", "0.2"),
                ("alpha", "0.5"),
                ("threshold.frequency", "0.01"),
            ],
            ExperimentKind::ExitScaling => &[
                ("potential", "tilted_double_well_1d"),
                ("epsilons", "0.25,0.35,0.5"),
                ("paths", "10000"),
                ("dt", "0.001"),
                ("horizon", "10000"),
                ("x_start", "global_min"),
                ("oracle_resolution", "2048"),
                ("threshold.slope_tolerance", "0.25"),
                ("threshold.agreement", "0.15"),
            ],
            ExperimentKind::UniformSurvival => &[
                ("potential", "tilted_double_well_1d"),
                ("epsilons", "0.25,0.5"),
                ("grid_points", "64"),
                ("grid_level", "0.5"),
                ("horizon", "arrhenius"),
                ("replicas", "200"),
                ("dt", "0.001"),
                ("threshold.confidence", "0.95"),
            ],
            ExperimentKind::LyapunovDecay => &[
                ("potential", "double_well_1d"),
                ("epsilon", "0.5"),
                ("n_particles", "500"),
                ("replicas", "20"),
                ("dt", "0.001"),
                ("block_time", "2"),
                ("cadence", "1"),
                ("threshold.sigmas", "3"),
                ("threshold.level_factor", "2"),
            ],
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|k| k.as_str()).collect();
            format!("unknown experiment '{s}' (expected one of {})", names.join(", "))
        })
    }
}

/// Keys every experiment accepts.
const COMMON: &[(&str, &str)] = &[("seed", "1"), ("output_dir", ""), ("threads", "0")];

#[derive(Clone, Debug, PartialEq)]
pub enum StartPoint {
    GlobalMin,
    At(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    value: String,
    origin: Origin,
}

/// Parsed but unvalidated key/value pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::Line(i + 1);
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| at(origin, format!("expected key=value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(at(origin, "empty key"));
            }
            if value.is_empty() {
                return Err(at(origin, format!("key '{key}' has no value")));
            }
            if let Some(prev) = entries.get(key) {
                return Err(at(origin, format!("duplicate key '{key}' (first set on {})", prev.origin)));
            }
            entries.insert(key.to_string(), Entry { value: value.to_string(), origin });
        }
        Ok(Self { entries })
    }

    /// Applies `--key value` pairs; later flags win over the file.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<(), ConfigError> {
        let mut it = args.iter();
        while let Some(flag) = it.next() {
            let key = flag
                .strip_prefix("--")
                .filter(|k| !k.is_empty())
                .ok_or_else(|| at(Origin::CommandLine, format!("expected --key value, got '{flag}'")))?;
            let (key, value) = match key.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it.next().ok_or_else(|| at(Origin::CommandLine, format!("flag --{key} needs a value")))?;
                    (key.to_string(), v.clone())
                }
            };
            self.entries.insert(key, Entry { value, origin: Origin::CommandLine });
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), Entry { value: value.to_string(), origin: Origin::CommandLine });
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub potential: BuiltinPotential,
    pub potential_params: BTreeMap<String, f64>,
    pub epsilon: f64,
    pub epsilons: Vec<f64>,
    pub n_particles: Vec<usize>,
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub block_time: f64,
    pub replicas: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub threads: usize,
    pub oracle_resolution: usize,
    pub histogram_coarsen: usize,
    pub cadence: usize,
    pub times: Vec<f64>,
    pub x_start: StartPoint,
    pub y_start: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub c3: f64,
    pub snapshots: usize,
    pub snapshot_interval: f64,
    pub grid_points: usize,
    /// Position of the level `a` inside the window `(c*, U_0)`.
    pub grid_level: f64,
    /// `horizon = arrhenius` in uniform_survival: use `e^{a/ε}` per ε.
    pub arrhenius_horizon: bool,
    pub paths: usize,
    pub thresholds: BTreeMap<String, f64>,
    /// Every key the experiment reads, as resolved text.
    pub resolved: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn threshold(&self, name: &str) -> f64 {
        self.thresholds[name]
    }

    /// The resolved configuration in the input format.
    pub fn to_text(&self) -> String {
        let mut out = format!("experiment={}\n", self.experiment.as_str());
        for (k, v) in &self.resolved {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    resolve(&RawConfig::parse(text)?)
}

struct Resolver {
    merged: BTreeMap<String, Entry>,
}

impl Resolver {
    fn entry(&self, key: &str) -> &Entry {
        &self.merged[key]
    }

    fn parse<T: FromStr>(&self, key: &str, what: &str) -> Result<T, ConfigError> {
        let e = self.entry(key);
        e.value.parse().map_err(|_| at(e.origin, format!("{key} must be {what}, got '{}'", e.value)))
    }

    fn float(&self, key: &str, ok: impl Fn(f64) -> bool, what: &str) -> Result<f64, ConfigError> {
        let v: f64 = self.parse(key, what)?;
        if !(v.is_finite() && ok(v)) {
            return Err(at(self.entry(key).origin, format!("{key} must be {what}, got {v}")));
        }
        Ok(v)
    }

    fn positive(&self, key: &str) -> Result<f64, ConfigError> {
        self.float(key, |v| v > 0.0, "a positive number")
    }

    fn count(&self, key: &str, min: usize) -> Result<usize, ConfigError> {
        let v: usize = self.parse(key, &format!("an integer ≥ {min}"))?;
        if v < min {
            return Err(at(self.entry(key).origin, format!("{key} must be an integer ≥ {min}, got {v}")));
        }
        Ok(v)
    }

    fn list<T: FromStr>(&self, key: &str, what: &str) -> Result<Vec<T>, ConfigError> {
        let e = self.entry(key);
        e.value
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| at(e.origin, format!("{key} must be a comma-separated list of {what}, got '{}'", e.value))))
            .collect()
    }

    fn positive_list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let v: Vec<f64> = self.list(key, "positive numbers")?;
        if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(at(self.entry(key).origin, format!("{key} entries must be positive, got '{}'", self.entry(key).value)));
        }
        Ok(v)
    }

    fn fail(&self, key: &str, message: impl Into<String>) -> ConfigError {
        at(self.entry(key).origin, message)
    }
}

pub fn resolve(raw: &RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let exp_entry = raw
        .entries
        .get("experiment")
        .ok_or_else(|| ConfigError::General("missing required key 'experiment'".into()))?;
    let experiment: ExperimentKind = exp_entry.value.parse().map_err(|m: String| at(exp_entry.origin, m))?;

    let mut merged: BTreeMap<String, Entry> = BTreeMap::new();
    for (k, v) in COMMON.iter().chain(experiment.defaults()) {
        merged.insert(k.to_string(), Entry { value: v.to_string(), origin: Origin::Default });
    }
    let default_dir = format!("out/{}", experiment.as_str());
    merged.get_mut("output_dir").expect("common key").value = default_dir;

    // The potential decides which `potential.*` keys exist.
    if let Some(e) = raw.entries.get("potential") {
        merged.insert("potential".into(), e.clone());
    }
    let pot_entry = merged["potential"].clone();
    let potential: BuiltinPotential = pot_entry.value.parse().map_err(|e: fvqsd_core::Error| at(pot_entry.origin, e.to_string()))?;
    let param_keys: Vec<String> = potential.default_params().keys().map(|k| format!("potential.{k}")).collect();

    for (k, e) in &raw.entries {
        if k == "experiment" {
            continue;
        }
        if !merged.contains_key(k) && !param_keys.contains(k) {
            return Err(at(e.origin, format!("unknown key '{k}' for experiment {}", experiment.as_str())));
        }
        merged.insert(k.clone(), e.clone());
    }

    let r = Resolver { merged };
    let has = |k: &str| r.merged.contains_key(k);

    let mut potential_params = BTreeMap::new();
    for k in &param_keys {
        if has(k) {
            let v = r.float(k, |_| true, "a number")?;
            potential_params.insert(k["potential.".len()..].to_string(), v);
        }
    }

    let mut thresholds = BTreeMap::new();
    for k in r.merged.keys().filter(|k| k.starts_with("threshold.")) {
        thresholds.insert(k["threshold.".len()..].to_string(), r.float(k, |_| true, "a finite number")?);
    }

    let opt_pos = |k: &str, fallback: f64| if has(k) { r.positive(k) } else { Ok(fallback) };
    let opt_count = |k: &str, min: usize, fallback: usize| if has(k) { r.count(k, min) } else { Ok(fallback) };

    let epsilon = opt_pos("epsilon", 0.5)?;
    let epsilons = if has("epsilons") { r.positive_list("epsilons")? } else { vec![epsilon] };
    let n_particles: Vec<usize> = if has("n_particles") { r.list("n_particles", "integers")? } else { vec![2] };
    if n_particles.iter().any(|&n| n < 2) {
        return Err(r.fail("n_particles", "n_particles entries must be at least 2"));
    }
    let dt = opt_pos("dt", 1e-3)?;
    let arrhenius_horizon = has("horizon") && r.entry("horizon").value == "arrhenius";
    if arrhenius_horizon && experiment != ExperimentKind::UniformSurvival {
        return Err(r.fail("horizon", "horizon=arrhenius is only meaningful for uniform_survival"));
    }
    let horizon = if arrhenius_horizon { 0.0 } else { opt_pos("horizon", 1.0)? };
    let burn_in = if has("burn_in") { r.float("burn_in", |v| v >= 0.0, "a non-negative number")? } else { 0.0 };
    let block_time = opt_pos("block_time", 1.0)?;
    let replicas = opt_count("replicas", 1, 1)?;
    let seed: u64 = r.parse("seed", "an unsigned 64-bit integer")?;
    let output_dir = PathBuf::from(&r.entry("output_dir").value);
    let threads = r.count("threads", 0)?;
    let oracle_resolution = opt_count("oracle_resolution", 64, 1024)?;
    let histogram_coarsen = opt_count("histogram_coarsen", 1, 4)?;
    let cadence = opt_count("cadence", 1, 1)?;
    let times = if has("times") { r.positive_list("times")? } else { vec![horizon] };
    let x_start = if !has("x_start") || r.entry("x_start").value == "global_min" {
        StartPoint::GlobalMin
    } else {
        StartPoint::At(r.list("x_start", "coordinates")?)
    };
    let y_start: Vec<f64> = if has("y_start") { r.list("y_start", "coordinates")? } else { Vec::new() };
    let alpha = if has("alpha") { r.float("alpha", |v| v > 0.0 && v < 1.0, "in (0, 1)")? } else { 0.1 };
    let beta = opt_pos("beta", 0.01)?;
    let c3 = opt_pos("c3", 1.0)?;
    let snapshots = opt_count("snapshots", 1, 1)?;
    let snapshot_interval = opt_pos("snapshot_interval", 1.0)?;
    let grid_points = opt_count("grid_points", 1, 1)?;
    let grid_level = if has("grid_level") { r.float("grid_level", |v| v > 0.0 && v < 1.0, "in (0, 1)")? } else { 0.5 };
    let paths = opt_count("paths", 1, 1)?;

    // Per-experiment consistency.
    match experiment {
        ExperimentKind::QsdAccuracy | ExperimentKind::BoundaryFraction | ExperimentKind::LyapunovDecay => {
            if n_particles.len() != 1 {
                return Err(r.fail("n_particles", "this experiment takes a single n_particles value"));
            }
        }
        ExperimentKind::ContractionVsN | ExperimentKind::ChaosVsN => {
            if n_particles.len() < 2 {
                return Err(r.fail("n_particles", "this experiment compares at least two particle numbers"));
            }
        }
        _ => {}
    }
    match experiment {
        ExperimentKind::QsdAccuracy if burn_in >= horizon => {
            return Err(r.fail("burn_in", format!("burn_in {burn_in} must be smaller than horizon {horizon}")));
        }
        ExperimentKind::ContractionVsN => {
            if alpha >= 0.25 {
                return Err(r.fail("alpha", format!("alpha must lie in (0, 1/4) for the coupling distance, got {alpha}")));
            }
            if replicas < 30 {
                return Err(r.fail("replicas", format!("contraction statistics need at least 30 replicas, got {replicas}")));
            }
            if y_start.is_empty() {
                return Err(r.fail("y_start", "y_start is required"));
            }
        }
        ExperimentKind::ChaosVsN => {
            if n_particles.len() < 3 {
                return Err(r.fail("n_particles", "a slope fit needs at least three particle numbers"));
            }
            if times.windows(2).any(|w| w[0] >= w[1]) {
                return Err(r.fail("times", "times must be strictly increasing"));
            }
            if replicas < 2 {
                return Err(r.fail("replicas", "error bars need at least two replicas"));
            }
        }
        ExperimentKind::ExitScaling if epsilons.len() < 3 => {
            return Err(r.fail("epsilons", "the Arrhenius fit needs at least three temperatures"));
        }
        ExperimentKind::UniformSurvival if epsilons.len() != 2 || epsilons[0] >= epsilons[1] => {
            return Err(r.fail("epsilons", "uniform_survival compares exactly two increasing temperatures (cold,hot)"));
        }
        ExperimentKind::LyapunovDecay if replicas < 2 => {
            return Err(r.fail("replicas", "error bars need at least two replicas"));
        }
        _ => {}
    }
    if let Some(&c) = thresholds.get("confidence") {
        if !(c > 0.5 && c < 1.0) {
            return Err(r.fail("threshold.confidence", format!("threshold.confidence must lie in (0.5, 1), got {c}")));
        }
    }

    let resolved = r.merged.iter().map(|(k, e)| (k.clone(), e.value.clone())).collect();
    Ok(ExperimentConfig {
        experiment,
        potential,
        potential_params,
        epsilon,
        epsilons,
        n_particles,
        dt,
        horizon,
        burn_in,
        block_time,
        replicas,
        seed,
        output_dir,
        threads,
        oracle_resolution,
        histogram_coarsen,
        cadence,
        times,
        x_start,
        y_start,
        alpha,
        beta,
        c3,
        snapshots,
        snapshot_interval,
        grid_points,
        grid_level,
        arrhenius_horizon,
        paths,
        thresholds,
        resolved,
    })
}
