mod coupled;
mod distance;
mod lyapunov;

pub use coupled::{
    contraction_experiment, coupled_fv_step, free_reflection_merge_time, write_contraction_csv, ContractionResult,
    CoupledState, CoupledStepReport, CouplingQuantiles,
};
pub use distance::{distance_d, ConditionReport, DistanceParams};
pub use lyapunov::{build_lyapunov, LyapunovSpec};

#[cfg(test)]
mod tests;
