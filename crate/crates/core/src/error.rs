use thiserror::Error;

/// Errors produced by the simulator and optimizer.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Mismatched vector or matrix shapes.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A configuration key failed to parse or validate.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// A linear-algebra kernel failed or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
