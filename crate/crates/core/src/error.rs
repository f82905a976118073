use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series too short: {len} samples, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error in {path} at row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("dictionary error: {0}")]
    Dictionary(String),

    #[error("non-finite dictionary column `{0}`")]
    NonFiniteColumn(String),

    #[error("degenerate regression: {0}")]
    Degenerate(String),

    #[error("matrix not positive definite after {attempts} jitter attempts (last jitter {jitter:e})")]
    NotPositiveDefinite { attempts: usize, jitter: f64 },

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("dof {dof}: {source}")]
    Dof {
        dof: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_dof(self, dof: usize) -> Self {
        Error::Dof {
            dof,
            source: Box::new(self),
        }
    }

    /// Strips any `Dof` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Dof { source, .. } => source.root(),
            other => other,
        }
    }
}
