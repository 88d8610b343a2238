use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration; `field` names the offending entry.
    #[error("config error in {field}: {message}")]
    Config { field: String, message: String },

    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative solver hit its iteration cap or broke down.
    #[error("{solver} failed after {iterations} iterations (residual {residual:e}): {message}")]
    Solver {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        message: String,
    },

    /// A factorization of a matrix that should be SPD failed.
    #[error("internal error: {0}")]
    Internal(String),

    /// Identification driver failure with the iterate at which it happened.
    #[error("identification failed at iteration {iteration}: {source}")]
    Identification {
        iteration: usize,
        e: Vec<f64>,
        f: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
