//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation's arguments was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Tensor or matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A text input (CSV row, manifest line) could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A binary file (cache, checkpoint) is malformed: bad magic, wrong
    /// version, or truncated.
    #[error("format error: {0}")]
    Format(String),

    /// A non-finite value (NaN/Inf) surfaced during computation.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A required input file or artifact is absent.
    #[error("missing input: {0}")]
    MissingInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
