use std::path::{Path, PathBuf};

use semturn_tensor::TensorError;
use thiserror::Error;

use crate::corpus::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: size mismatch: {message}")]
    SizeMismatch { path: PathBuf, message: String },
    #[error("{path}: non-finite value at index {index}")]
    NonFinite { path: PathBuf, index: usize },
    #[error("invalid session: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Violation>),
    #[error("annotation line {line}: {message}")]
    Annotation { line: usize, message: String },
    #[error("invalid configuration at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("window has no real motion frames")]
    NoMotion,
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::Annotation { .. }
                | Error::Config { .. }
                | Error::SizeMismatch { .. }
                | Error::NonFinite { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
