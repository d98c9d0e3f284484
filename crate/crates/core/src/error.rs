use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("caption is empty after normalization")]
    EmptyCaption,

    #[error("invalid token {0:?}: tokens must be non-empty and free of whitespace")]
    InvalidToken(String),

    #[error("reference set for image {0} is empty")]
    EmptyRefSet(String),

    #[error("leave-one-out scoring left no references for image {0}")]
    DegenerateRefSet(String),

    #[error("{what} index {index} out of range (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("sequence length {len} exceeds maximum {max}")]
    Length { len: usize, max: usize },

    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("numerical abort: {0}")]
    NumericalAbort(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: parse error at byte {offset}: {message}", path.display())]
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
