use std::path::PathBuf;

use thiserror::Error;

/// Failures raised by tensor ops and the autodiff tape.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

impl TensorError {
    pub(crate) fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        TensorError::ShapeMismatch { op, lhs: lhs.to_vec(), rhs: rhs.to_vec() }
    }
}

#[derive(Debug, Error)]
pub enum SeaError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error("document {doc_id}: {msg}")]
    Document { doc_id: String, msg: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("loss became non-finite (first non-finite op: {0})")]
    NonFiniteLoss(String),
}

impl SeaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SeaError::Io { path: path.into(), source }
    }

    /// True for errors caused by bad user input (files, configs, data) rather
    /// than by a failure while computing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            SeaError::Io { .. }
                | SeaError::Schema { .. }
                | SeaError::Document { .. }
                | SeaError::Config(_)
                | SeaError::Checkpoint(_)
                | SeaError::Json(_)
        )
    }
}

pub type Result<T, E = SeaError> = std::result::Result<T, E>;
