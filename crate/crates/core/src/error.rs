use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Sylvester construction only exists for powers of two.
    #[error("unsupported Hadamard order {0}: must be a power of two")]
    UnsupportedOrder(usize),

    #[error("singular matrix: numerical rank {rank} < {cols} columns")]
    Singular { rank: usize, cols: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible design: {0}")]
    InfeasibleDesign(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}
