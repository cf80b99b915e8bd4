use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An input value broke a documented invariant.
    #[error("validation failed: {0}")]
    Validation(String),
    /// A parameter is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configured size or cap would be exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    /// Malformed input text.
    #[error("parse error: {0}")]
    Parse(String),
    /// An internal consistency check failed.
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
