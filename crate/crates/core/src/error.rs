use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("non-finite value produced by {0}")]
    Numeric(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("unsupported projection: {0}")]
    UnsupportedProjection(String),

    #[error("empty silhouette: nothing covered in the {0} view")]
    EmptySilhouette(String),

    #[error("missing modality: {0}")]
    MissingModality(&'static str),

    #[error("degenerate-variance: differences have zero variance")]
    DegenerateVariance,

    #[error("covariance product is not positive semi-definite (eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("image too small: {width}x{height}, need at least {min}x{min}")]
    TooSmall { width: usize, height: usize, min: usize },

    #[error("training diverged: non-finite loss at step {step}")]
    Diverged { step: usize },

    #[error("malformed tensor file {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error classes, used for process exit codes and the C error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::UnsupportedProjection(_) => ErrorKind::Usage,
            Error::Numeric(_) | Error::DegenerateVariance | Error::NotPsd(_) | Error::Diverged { .. } => {
                ErrorKind::Numeric
            }
            _ => ErrorKind::Data,
        }
    }

    /// Stable machine-readable tag.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Shape { .. } => "shape",
            Error::Numeric(_) => "numeric",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::UnsupportedProjection(_) => "unsupported-projection",
            Error::EmptySilhouette(_) => "empty-silhouette",
            Error::MissingModality(_) => "missing-modality",
            Error::DegenerateVariance => "degenerate-variance",
            Error::NotPsd(_) => "not-psd",
            Error::TooSmall { .. } => "too-small",
            Error::Diverged { .. } => "diverged",
            Error::Format { .. } => "format",
            Error::Json(_) => "json",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
