//! Shared error type for the core crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("parameter `{name}` value {value} outside range [{low}, {high}]")]
    OutOfRange {
        name: String,
        value: f64,
        low: f64,
        high: f64,
    },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: String,
        expected: String,
        got: String,
    },

    #[error("unknown environment `{id}` (valid: {valid})")]
    UnknownEnv { id: String, valid: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("start states differ by {max_abs_diff:.3e} (tolerance {tol:.1e}); pass the unchecked variant to compare trajectories with different starts")]
    StartMismatch { max_abs_diff: f64, tol: f64 },

    #[error("kernel matrix not positive definite after jitter ladder up to {max_jitter:.1e}")]
    IllConditioned { max_jitter: f64 },

    #[error("rollout budget exhausted: {used} of {cap} steps used, {requested} more requested")]
    BudgetExhausted { used: u64, cap: u64, requested: u64 },

    #[error("invalid {what}: {why}")]
    Invalid { what: String, why: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub fn invalid(what: impl Into<String>, why: impl Into<String>) -> Self {
        CoreError::Invalid {
            what: what.into(),
            why: why.into(),
        }
    }

    pub fn shape(context: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        CoreError::Shape {
            context: context.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
