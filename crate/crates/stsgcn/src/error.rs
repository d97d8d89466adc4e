//! Error type shared across the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor extents do not line up for an operation. The message names the
    /// operation and the offending axis.
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// A tensor was constructed with inconsistent shape/data.
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    /// backward() was called on a non-scalar value.
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    /// backward() was called on a tape with no recorded operations.
    #[error("backward on an empty tape")]
    EmptyTape,

    /// backward() was called twice on the same tape. A tape is single-shot;
    /// build a fresh tape for every forward/backward pass.
    #[error("backward already ran on this tape")]
    BackwardAlreadyRan,

    /// A forward pass or loss produced a non-finite value.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Gradient check precondition violated.
    #[error("invalid gradient-check step size: eps must be > 0, got {0}")]
    InvalidEps(f64),

    /// Optimizer rejected a step.
    #[error("optimizer rejected step: {0}")]
    Optimizer(String),

    /// Training diverged (non-finite loss).
    #[error("training diverged at epoch {epoch}, batch {batch}: loss is not finite")]
    Diverged { epoch: usize, batch: usize },

    /// Invalid configuration value.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Data file could not be parsed.
    #[error("parse error in {path} at line {line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    /// Data contains invalid values (non-finite, wrong counts).
    #[error("data error: {0}")]
    Data(String),

    /// Checkpoint does not match the configured model.
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    /// Operation not supported for the active variant.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }
}
