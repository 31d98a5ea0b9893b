use thiserror::Error;

use crate::notation::ParseError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index:?} out of range for dims {dims:?}")]
    OutOfRange { index: Vec<usize>, dims: Vec<usize> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("illegal flattening of modes ({i}, {j}): {reason}")]
    IllegalFlatten { i: usize, j: usize, reason: String },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("unsupported contraction: {0}")]
    Unsupported(String),

    #[error("plan/tensor mismatch: {0}")]
    Consistency(String),

    #[error("malformed tensor file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
