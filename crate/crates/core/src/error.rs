use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("size mismatch: expected {expected}, got {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("subset {0:?} is invalid: {1}")]
    InvalidSubset(Vec<usize>, String),

    #[error("too many blocks: {found} exceeds the cap of {cap}")]
    TooManyBlocks { found: usize, cap: usize },

    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("mixing matrix A_delta is singular")]
    SingularMixing,

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("no cached null distribution for key at {0}")]
    CacheMiss(PathBuf),

    #[error("checksum mismatch in cache file {0}")]
    ChecksumMismatch(PathBuf),

    #[error("malformed cache file {path}: {reason}")]
    CacheFormat { path: PathBuf, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("block specification error: {0}")]
    BlockSpec(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
