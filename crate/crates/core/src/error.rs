use thiserror::Error;

/// Errors raised by the simulation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate potential: {0}")]
    Degenerate(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Every particle left the domain within a single step. The continuous
    /// process never does this, so the step size is too large for the
    /// temperature.
    #[error("mass extinction at dt too large: all {n_particles} particles exited in the step ending at t = {time}")]
    MassExtinction { time: f64, n_particles: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
