use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("zero-norm token encountered in {0}")]
    ZeroNorm(String),

    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("timestep {t} outside 1..={max}")]
    Range { t: usize, max: usize },

    #[error("cached assignment reused across timesteps (created at {created}, requested at {requested})")]
    StaleCache { created: usize, requested: usize },

    #[error("compression audit failed: {0}")]
    Audit(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dim(message: impl Into<String>) -> Self {
        Error::Dimension(message.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
