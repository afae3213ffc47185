use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid {width}x{height} is too small (need at least 2x2)")]
    GridTooSmall { width: usize, height: usize },

    #[error("data length {len} does not match grid {width}x{height}")]
    LengthMismatch { len: usize, width: usize, height: usize },

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("field has zero L2 norm")]
    ZeroNorm,

    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("index {index} out of bounds for axis of length {len}")]
    OutOfBounds { index: usize, len: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error("{path}:{line}: {msg}")]
    Config { path: PathBuf, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
