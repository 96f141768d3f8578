use std::path::PathBuf;

/// Crate-wide error type. Variants mirror the failure classes of the public
/// contracts: configuration, shape, input, protocol, state, training, and
/// file-format errors.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("input error: {0}")]
    Input(String),

    /// Environment stepped while terminal, or otherwise misused.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// An operation required state the caller has not established
    /// (e.g. sampling from an empty replay memory).
    #[error("state error: {0}")]
    State(String),

    /// Training produced a non-finite value; the step was aborted.
    #[error("training error: {0}")]
    Training(String),

    /// Malformed checkpoint or other on-disk artifact.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
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
