use thiserror::Error;

use crate::charpoly::Regime;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected} coefficients, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid argument `{name}`: {constraint}")]
    InvalidArgument { name: &'static str, constraint: String },

    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),

    #[error("expected {expected} regime, found {found}")]
    RegimeMismatch { expected: &'static str, found: Regime },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("quadrature tolerance {target:e} not reached; achieved {achieved:e}")]
    Accuracy { target: f64, achieved: f64 },

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("spectrum exhausted after {modes} usable modes; certified threshold reaches only M = {max_m}")]
    Capacity { modes: usize, max_m: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, constraint: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        constraint: constraint.into(),
    }
}
