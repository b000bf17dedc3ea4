use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input or configuration violates a documented invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown material `{0}`")]
    UnknownMaterial(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A numerical quantity became NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("root finding failed: {0}")]
    NoBracket(String),

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (configs, data files, structures)
    /// rather than by a failure during computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_) | Error::Parse { .. } | Error::Io { .. } | Error::UnknownMaterial(_) | Error::Serde(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
