use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid dimensions, parameters or configuration values.
    #[error("configuration error: {0}")]
    Config(String),

    /// A malformed line in an input file. `line` is 1-based and counts the header.
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    /// A non-finite value appeared during training or inference.
    #[error("training diverged ({location}): {message}")]
    Divergence { location: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a location (strategy, epoch, batch, ...) to a divergence error.
    pub fn at(self, location: impl Into<String>) -> Self {
        match self {
            Error::Divergence {
                location: inner,
                message,
            } => {
                let outer = location.into();
                let location = if inner.is_empty() {
                    outer
                } else {
                    format!("{outer}, {inner}")
                };
                Error::Divergence { location, message }
            }
            other => other,
        }
    }
}
