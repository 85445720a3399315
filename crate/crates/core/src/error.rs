use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid shapes, out-of-range indices or parameters outside their domain.
    #[error("validation error: {0}")]
    Validation(String),

    /// A malformed input file. `line` is 1-based; 0 means the error is not
    /// tied to a particular line (e.g. a truncated binary payload).
    #[error("{}:{line}: {message}", path.display())]
    Ingest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Non-finite objective, SVD failure or a diverging line search.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn ingest(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Ingest {
            path: path.into(),
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical routines, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}
