use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("backward on a scalar that is not attached to any trainable input")]
    Detached,

    #[error("tape already consumed by a previous backward pass; re-run the forward pass")]
    TapeConsumed,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("could not place {what} after {attempts} attempts")]
    Placement { what: &'static str, attempts: usize },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("token {token} out of range for vocabulary of size {vocab}")]
    TokenRange { token: usize, vocab: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config hash mismatch: checkpoint has {found}, expected {expected}")]
    ConfigHash { expected: String, found: String },

    #[error("checkpoint {dir} is missing agent {agent}")]
    MissingAgent { dir: PathBuf, agent: usize },

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
