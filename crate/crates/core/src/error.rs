use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric: |m[{row},{col}] - m[{col},{row}]| exceeds tolerance")]
    NotSymmetric { row: usize, col: usize },

    #[error("cholesky factorization failed at pivot {pivot} (matrix not positive definite)")]
    NotPositiveDefinite { pivot: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("layer `{layer}`: backward called without a matching forward")]
    BackwardBeforeForward { layer: String },

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("objective is not deterministic: two evaluations gave {first} and {second}")]
    NonDeterministic { first: f64, second: f64 },

    #[error("dictionary must be undercomplete: {classes} classes >= feature dim {dim}")]
    NotUndercomplete { classes: usize, dim: usize },

    #[error("class `{class}` has an all-zero embedding")]
    ZeroEmbedding { class: String },

    #[error("reconstructed embedding of class `{class}` has zero norm")]
    ZeroReconstruction { class: String },

    #[error("label value {value} at sample {sample}, class {class} is not binary")]
    NonBinaryLabel {
        sample: usize,
        class: usize,
        value: f64,
    },

    #[error("class count mismatch: expected {expected}, found {found}")]
    ClassCountMismatch { expected: usize, found: usize },

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}: no embedding for class(es) {}", .classes.join(", "))]
    MissingToken { path: PathBuf, classes: Vec<String> },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for errors caused by the filesystem rather than by content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
