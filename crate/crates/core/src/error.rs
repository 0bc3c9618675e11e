//! Crate-wide error type.

#[derive(Debug, thiserror::Error)]
pub enum CarnotError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("not bracket-generating: the vectors Q(e_j, e_k) do not span the vertical layer")]
    NotBracketGenerating,
    #[error("dilation factor must be positive")]
    NonPositiveDilation,
    #[error("horizontal index out of range: {index} (horizontal dimension {m})")]
    IndexOutOfRange { index: usize, m: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix does not match the filiform representation template: {0}")]
    MatrixTemplate(String),
    #[error("not a submersion here: rank {rank} < ambient dimension {n}")]
    NotSubmersion { rank: usize, n: usize },
    #[error("solver failed: {0}")]
    SolverFailure(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, CarnotError>;
