use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or settings that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input values that violate a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),
    /// Malformed on-disk data.
    #[error("format error: {0}")]
    Format(String),
    /// A non-finite value surfaced during optimisation.
    #[error("divergence: {0}")]
    Divergence(String),
    /// Broken internal contract, e.g. a cache paired with the wrong network.
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
