//! Error type shared by every engine in the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T, E = PeaceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PeaceError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { name: String, pos: usize },

    #[error("function `{func}` expects {expected} argument(s), got {found}")]
    Arity {
        func: String,
        expected: usize,
        found: usize,
    },

    /// Raised by symbolic differentiation; callers fall back to finite differences.
    #[error("expression is not symbolically differentiable: `{node}`")]
    NonDifferentiable { node: String },

    #[error("invalid degree {0}: must be finite and non-negative")]
    InvalidDegree(f64),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature budget exceeded: {nodes} nodes requested, budget is {budget}")]
    BudgetExceeded { nodes: u128, budget: u64 },

    #[error("integrand is not finite at {coords:?}")]
    NonFinite { coords: Vec<f64> },

    #[error("domain truncation failed on axis {axis}: {reason}")]
    TruncationFailed { axis: usize, reason: String },

    #[error("sample list is empty")]
    EmptySamples,

    #[error("discrete distribution is not normalized (sum = {sum})")]
    NotNormalized { sum: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("matrix is singular (|det| = {det:e})")]
    Singular { det: f64 },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("weight bound is identically zero; no admissible non-trivial field exists")]
    InfeasibleBound,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
