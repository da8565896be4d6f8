use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid dimensions {height}x{width}: {reason}")]
    InvalidDims {
        height: usize,
        width: usize,
        reason: &'static str,
    },

    #[error("index {index} at position {position} is out of range for {n_cells} cells")]
    IndexOutOfRange {
        index: usize,
        position: usize,
        n_cells: usize,
    },

    #[error("duplicate index {index} at position {position}")]
    DuplicateIndex { index: usize, position: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at offset {0}")]
    NonFinite(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("need at least {required} points, got {actual}")]
    TooFewPoints { required: usize, actual: usize },

    #[error("all points are collinear")]
    Collinear,

    #[error("format error: {0}")]
    Format(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
