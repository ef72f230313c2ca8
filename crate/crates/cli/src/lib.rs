//! Config-driven experiment runner for the `fvqsd` binary.

pub mod checks;
pub mod config;
pub mod experiments;
pub mod run;

pub use config::{parse_config, ConfigError, ExperimentConfig, ExperimentKind};
pub use experiments::{run_experiment, Outcome, Verdict};
pub use run::{RunError, RunReport};
