use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("input outside the supported domain: {0}")]
    InputDomain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("not supported at this size or configuration: {0}")]
    Capability(String),

    #[error("numerically ill-conditioned evaluation: {0}")]
    Conditioning(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("unsupported construction: {0}")]
    Unsupported(String),

    #[error("malformed batch file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors that signal a numerical or capability limit rather
    /// than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Capability(_) | Error::Conditioning(_) | Error::Estimation(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
