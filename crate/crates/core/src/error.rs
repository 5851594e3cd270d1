use std::path::PathBuf;

/// Errors raised across the dolly-in pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A value fell outside the domain an operation accepts.
    #[error("input out of domain: {0}")]
    InputDomain(String),

    /// A configuration value violates its invariants.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An operation was called in a state where it is not allowed.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    /// A numeric update produced or consumed a non-finite value.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("malformed {what}: {detail}")]
    Parse { what: &'static str, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: &'static str, detail: impl ToString) -> Self {
        Error::Parse {
            what,
            detail: detail.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
