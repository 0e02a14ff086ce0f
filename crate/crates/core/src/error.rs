use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not a probability vector: {0}")]
    NotOnSimplex(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("class index {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sample `{id}` has no annotations")]
    NoAnnotations { id: String },

    #[error("sample `{id}`: {reason}")]
    InvalidSample { id: String, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },

    #[error("{path}: file is empty")]
    EmptyFile { path: PathBuf },

    #[error("confidence table has no entry for sample `{id}`")]
    MissingConfidence { id: String },

    #[error("confidence table entry `{id}` is not part of the dataset")]
    UnexpectedConfidence { id: String },

    #[error("wrong confidence table: expected {expected} kind, got {actual}")]
    WrongTableKind { expected: &'static str, actual: &'static str },

    #[error("missing {0}")]
    MissingInput(String),

    #[error("every sample in the batch is gated out")]
    AllExcluded,

    #[error("numerical failure at epoch {epoch}: {reason}")]
    NumericalAbort { epoch: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, reason: impl ToString) -> Self {
        Error::Parse { path: path.into(), line, reason: reason.to_string() }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl ToString) -> Self {
        Error::InvalidParameter { name, reason: reason.to_string() }
    }
}
