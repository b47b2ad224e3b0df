use thiserror::Error;

/// Errors produced by the library.
///
/// `Invalid` and `Shape` indicate rejected inputs (the caller's data or
/// configuration violates a documented precondition); the remaining variants
/// are runtime failures. The CLI maps the former to exit code 1 and the
/// latter to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("container format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by rejected input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Invalid(_) | Error::Shape(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
