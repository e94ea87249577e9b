use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The bytes on disk do not follow the EMB1 layout.
    #[error("malformed embedding file: {0}")]
    Format(String),

    /// Data violates a type invariant (non-finite values, bad labels, dimension mismatch).
    #[error("invalid data: {0}")]
    Validation(String),

    /// A parameter combination cannot be satisfied (M > N, empty classes, bad fractions).
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
