use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("non-finite value in {field} at row {row}")]
    NonFinite { field: &'static str, row: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("weak instrument {instrument}: first-stage F = {f_stat:.3} below threshold {threshold}")]
    WeakInstrument {
        instrument: usize,
        f_stat: f64,
        threshold: f64,
    },

    #[error(
        "singular design ({rows}x{cols}, rank {rank}); increase ridge_lambda or shrink the basis"
    )]
    Singular { rows: usize, cols: usize, rank: usize },

    #[error("design has {cols} columns but only {rows} rows")]
    Underdetermined { rows: usize, cols: usize },

    #[error("degenerate weights: all modal members carry zero weight")]
    DegenerateWeights,

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Wraps the error with a short description of what was being attempted.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips [`Error::Context`] layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
