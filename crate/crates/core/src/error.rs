//! Error types shared across the crate.

use crate::model::Role;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Smiles(#[from] crate::smiles::SmilesError),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Invariant violations that indicate a bug rather than bad input.
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

/// Data-shaped failures: bad files, bad labels, bad dimensions, bad configs.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{role} label {label:?} is not in the vocabulary")]
    UnknownLabel { role: Role, label: String },

    #[error("vocabulary for {role} has a duplicate label {label:?}")]
    DuplicateLabel { role: Role, label: String },

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },

    #[error("duplicate reaction id {id:?}")]
    DuplicateId { id: String },

    #[error("unknown reaction id {id:?}")]
    UnknownId { id: String },

    #[error("bad magic in {path}: expected {expected:?}")]
    BadMagic { path: String, expected: String },

    #[error("unsupported format version {found} in {path} (supported: {supported})")]
    BadVersion {
        path: String,
        found: u32,
        supported: u32,
    },

    #[error("checksum mismatch in {path}")]
    ChecksumMismatch { path: String },

    #[error("dimension mismatch: {message}")]
    Dimension { message: String },

    #[error("non-finite value at row {row}{}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    NonFinite { row: usize, column: Option<usize> },

    #[error("zero-norm key for reaction {id:?}")]
    ZeroNormKey { id: String },

    #[error("record {id:?} has split {split:?}; only train records may enter here")]
    SplitViolation { id: String, split: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(String),
}

impl Error {
    pub fn dimension(message: impl Into<String>) -> Self {
        DataError::Dimension {
            message: message.into(),
        }
        .into()
    }

    pub fn config(message: impl Into<String>) -> Self {
        DataError::Config(message.into()).into()
    }

    pub fn empty(what: impl Into<String>) -> Self {
        DataError::Empty(what.into()).into()
    }
}
