use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Operands or buffers whose shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A requested interval or index outside the available range.
    #[error("out of range: {0}")]
    Range(String),

    /// A word pair whose shuffle would exceed the truncation degree.
    #[error("shuffle of words with total length {total} exceeds degree {depth}")]
    Truncation { total: usize, depth: usize },

    /// Basis projection left a residual; the input was not a Lie element.
    #[error("not a Lie element: projection residual {residual:e} at level {level}")]
    NotLie { level: usize, residual: f64 },

    /// Malformed stream, config or checkpoint text.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Training diverged.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
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

pub type Result<T> = std::result::Result<T, Error>;
