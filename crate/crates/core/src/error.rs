use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("input too short for {op}: length {len} < window {window}")]
    InputTooShort {
        op: &'static str,
        len: usize,
        window: usize,
    },

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("label index {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("state error: {0}")]
    State(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("unknown label `{label}` at line {line}")]
    UnknownLabel { label: String, line: usize },

    #[error("corpus structure error: {0}")]
    Structure(String),

    #[error("missing sentence embedding for turn {dialogue_id}#{turn_index}")]
    MissingEmbedding {
        dialogue_id: String,
        turn_index: usize,
    },

    #[error("infeasible sample: label `{label}` needs {quota} turns but only {available} exist")]
    InfeasibleSample {
        label: String,
        quota: usize,
        available: usize,
    },

    #[error("token id {id} out of range for vocabulary of size {size}")]
    Vocabulary { id: usize, size: usize },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("architecture mismatch: checkpoint holds `{found}`, expected `{expected}`")]
    ArchitectureMismatch { found: String, expected: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
