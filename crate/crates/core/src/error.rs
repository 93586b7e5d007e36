//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor-shape mismatch, named after the operation that rejected it.
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: String, detail: String },

    /// An operation produced (or was handed) a NaN/Inf value.
    #[error("{op}: non-finite value")]
    NonFinite { op: String },

    /// Required input was empty.
    #[error("{0} must not be empty")]
    Empty(String),

    /// Malformed input file, with file/line diagnostics.
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    /// Anything else: bad arguments, inconsistent data, contract violations.
    #[error("{0}")]
    Invalid(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(op: &str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op: op.to_string(),
            detail: detail.into(),
        }
    }

    pub fn non_finite(op: &str) -> Self {
        Error::NonFinite { op: op.to_string() }
    }

    pub fn empty(what: &str) -> Self {
        Error::Empty(what.to_string())
    }

    pub fn parse(file: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.to_string(),
            line,
            msg: msg.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
