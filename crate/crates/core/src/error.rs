use thiserror::Error;

/// Errors produced by grid construction, transforms, operator assembly and
/// the verification harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid resolution insufficient: {0}")]
    InsufficientResolution(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("eigendecomposition failed: {0}")]
    Eigensolve(String),

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("spectral truncation too coarse: {0}")]
    TruncationTail(String),

    #[error("nodal set is not regular at resolution: {0}")]
    IrregularNodalSet(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
