use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible (dimensions, atom counts, lengths).
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An iterative factorization failed to converge within its cap.
    #[error("decomposition failure: {0}")]
    DecompositionFailure(String),

    /// A matrix required to have full column rank does not, at tolerance.
    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    /// A span/basis was requested of a numerically zero matrix.
    #[error("empty span: {0}")]
    EmptySpan(String),

    /// A set operation received an empty set.
    #[error("empty set: {0}")]
    EmptySet(String),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An exhaustive enumeration would exceed its combinatorial guard.
    #[error("combinatorial guard: {0}")]
    CombinatorialGuard(String),

    /// A text format violated its schema.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
