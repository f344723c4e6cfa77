use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate {what}: {id}")]
    Duplicate { what: &'static str, id: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: String, message: String },

    #[error("subject {subject}: insufficient {category} impostor pool ({available} subjects, need {required})")]
    InsufficientPool {
        category: &'static str,
        subject: String,
        available: usize,
        required: usize,
    },

    #[error("{what}: expected {expected}, found {found}")]
    CountMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("unknown session `{0}`")]
    UnknownSession(String),

    #[error("training diverged at epoch {epoch} (loss trace: {trace:?})")]
    Divergence { epoch: usize, trace: Vec<f64> },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            message: message.into(),
        }
    }

    /// Whether this error stems from bad input (as opposed to an I/O or
    /// numerical failure at runtime).
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Divergence { .. })
    }
}
