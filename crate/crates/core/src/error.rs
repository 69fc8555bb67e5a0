use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid ranking: {0}")]
    InvalidRanking(String),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    /// The instance is larger than the solver supports.
    #[error("{solver} supports at most {max} items, instance has {n}")]
    Capacity { solver: &'static str, n: usize, max: usize },
    #[error("power iteration did not converge after {iterations} iterations (last change {last_change:e})")]
    Convergence {
        iterations: usize,
        last_change: f64,
        last_iterate: Vec<f64>,
    },
    #[error("ingestion error at row {row}, column {column}: {message}")]
    Ingestion {
        row: usize,
        column: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
