use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid tag `{0}`: expected O, B-<class> or I-<class>")]
    InvalidTag(String),

    #[error("invalid IOB2 sequence at position {position}: `{tag}` has no opening B- tag")]
    InvalidIob2 { position: usize, tag: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate span embedding: {0}")]
    Degenerate(String),

    #[error("sequence of {len} subwords exceeds the maximum of {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("non-finite loss at step {step}; offending batch written to {dump}")]
    NonFiniteLoss { step: usize, dump: PathBuf },

    #[error("model tag set does not cover class `{class}` required by dataset `{dataset}`")]
    MissingClass { class: String, dataset: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
