use thiserror::Error;

/// Errors raised by the models, solvers and simulators of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("argument outside its domain: {0}")]
    Domain(String),

    #[error("stopping time is unbounded: zero drift and the path never crosses the threshold")]
    UnboundedStop,

    #[error("threshold x_alpha is negative for alpha = {alpha}; g is not evaluated there")]
    NegativeThreshold { alpha: f64 },

    #[error("queue is unstable: running utilization {utilization:.6} exceeded the guard")]
    Unstable { utilization: f64 },

    #[error("degenerate horizon: {0}")]
    DegenerateHorizon(String),

    #[error("bracketing failed: {0}")]
    Bracket(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {value}")))
    }
}

pub(crate) fn require_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be nonnegative and finite, got {value}")))
    }
}
