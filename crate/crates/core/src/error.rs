use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid edge {src}->{dst}: {reason}")]
    InvalidEdge {
        src: usize,
        dst: usize,
        reason: &'static str,
    },

    #[error("index {index} out of range for dimension {dim}")]
    IndexError { index: usize, dim: usize },

    #[error("dimension mismatch: {0}")]
    SizeError(String),

    #[error("matrix is not a directed Laplacian: {0}")]
    NotLaplacian(String),

    #[error("matrix is not Eulerian (row-sum residual {residual:e}, allowed {allowed:e})")]
    NotEulerian { residual: f64, allowed: f64 },

    #[error("non-finite value encountered: {0}")]
    NumericError(String),

    #[error("block to eliminate is singular: {0}")]
    SingularBlock(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },

    #[error("dense size {size} exceeds cap {cap}")]
    TooLarge { size: usize, cap: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("FindRCDD gave up after {rounds} rounds")]
    RetryExhausted { rounds: usize },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("Eulerian drift beyond tolerance at {stage}: residual {residual:e}")]
    NumericDrift { stage: String, residual: f64 },

    #[error("chain construction failed at level {level}: {reason}")]
    ChainBuildError { level: usize, reason: String },

    #[error("invalid chain: {0}")]
    ChainError(String),

    #[error("iteration diverged at step {0}")]
    Diverged(usize),

    #[error("solver stagnated after {iterations} iterations (relative residual {residual:e})")]
    Stagnated { iterations: usize, residual: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
