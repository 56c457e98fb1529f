use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("correlation matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("non-finite {what} at iteration {iteration}; state:\n{snapshot}")]
    NonFinite {
        iteration: usize,
        what: String,
        snapshot: String,
    },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{context}: {source}")]
    Run {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches run metadata (seed, resolution, ...) to an error.
    pub fn in_run(self, context: impl Into<String>) -> Self {
        Error::Run {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input (config, parameters, geometry).
    pub fn is_config_error(&self) -> bool {
        if let Error::Run { source, .. } = self {
            return source.is_config_error();
        }
        matches!(
            self,
            Error::Config { .. }
                | Error::InvalidGeometry(_)
                | Error::InvalidParameter(_)
                | Error::DimensionMismatch(_)
        )
    }
}
