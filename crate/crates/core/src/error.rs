use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed row in a CSV input. `line` is 1-based and counts the header.
    #[error("{file}:{line}: column `{column}`: {message}")]
    Parse {
        file: String,
        line: u64,
        column: String,
        message: String,
    },

    /// A record that parsed but violates a domain invariant.
    #[error("{kind} {id}: {message}")]
    Invariant {
        kind: &'static str,
        id: String,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("not converged: {0}")]
    NonConvergence(String),

    #[error("model: {0}")]
    Model(String),
}

impl Error {
    pub(crate) fn invariant(kind: &'static str, id: impl ToString, message: impl Into<String>) -> Self {
        Error::Invariant {
            kind,
            id: id.to_string(),
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
