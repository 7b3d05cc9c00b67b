use thiserror::Error;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension n = {0} too small for the lp kernel (need n >= 3)")]
    TooSmallDimension(usize),

    #[error("numerical failure: {what} (residual {residual:e})")]
    Numerical { what: String, residual: f64 },

    #[error("oracle budget of {0} queries exhausted")]
    BudgetExhausted(usize),

    #[error("adversary run incomplete: {done} of {budget} queries answered")]
    Incomplete { done: usize, budget: usize },

    #[error("section distortion {ratio} exceeds 4 after {attempts} attempts")]
    Distortion { ratio: f64, attempts: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
