use thiserror::Error;

/// Errors raised by carpet construction, solvers and estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid carpet spec: {0}")]
    InvalidSpec(String),

    #[error("not a cell: {0}")]
    NotACell(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("level mismatch: expected level {expected}, got {got}")]
    LevelMismatch { expected: u32, got: u32 },

    #[error("budget exceeded: {what} needs {needed}, budget is {budget}")]
    Budget {
        what: &'static str,
        needed: u128,
        budget: u128,
    },

    #[error("no convergence after {iterations} iterations (residual {residual:e}, energy {energy})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        energy: f64,
    },

    #[error("geometry diagnostic: {0}")]
    Geometry(String),

    #[error("subcritical exponent: {0}")]
    Subcritical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
