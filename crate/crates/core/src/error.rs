use thiserror::Error;

/// Errors raised by the spacing-statistics pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sequence too short: need at least {needed} levels, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("level sequence not sorted at index {index}")]
    Unsorted { index: usize },

    #[error("non-positive spacing {value} at index {index}")]
    DegenerateSpacing { index: usize, value: f64 },

    #[error("empty sample")]
    EmptySample,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("quadrature did not converge: estimated error {error_estimate:e} exceeds tolerance {tolerance:e}")]
    Quadrature { error_estimate: f64, tolerance: f64 },

    #[error("root bracketing failed for {what} on [{lo}, {hi}]")]
    Bracketing { what: String, lo: f64, hi: f64 },

    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    #[error("sigma table lookup out of range: n={n}, q={q}")]
    TableRange { n: usize, q: f64 },

    #[error("sigma table has no provenance header")]
    MissingProvenance,

    #[error("cumulative distribution not monotone at grid index {index}")]
    NonMonotoneCdf { index: usize },

    #[error("optimizer did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("degenerate histogram: {0}")]
    DegenerateHistogram(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
