use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent problem or scheme configuration.
    #[error("configuration error: {0}")]
    Configuration(String),
    /// The request would exceed a fixed resource guard.
    #[error("resource error: {0}")]
    Resource(String),
    /// A truncated scheme produced a non-finite state.
    #[error("truncated scheme blew up on path {path} at step {step}")]
    BlowUp { path: usize, step: usize },
    /// Not enough usable data for an estimate or fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
