//! Error type shared across the crate.

use crate::engine::IterationTrace;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite coordinates in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A formula's admissibility range was violated; names the formula and
    /// the bound so callers can surface actionable messages.
    #[error("{formula}: {what} = {value} violates the bound {bound}")]
    OutOfRange {
        formula: &'static str,
        what: &'static str,
        value: f64,
        bound: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("not a fixed point: residual {residual:e} exceeds tolerance {tol:e}")]
    NotFixed { residual: f64, tol: f64 },

    /// Iteration left the trust region.  The partial trace captured up to
    /// the offending step is carried along for inspection.
    #[error("iteration diverged at step {at}: iterate norm exceeded {guard:e}")]
    Diverged {
        at: usize,
        guard: f64,
        trace: Box<IterationTrace>,
    },
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }
}
