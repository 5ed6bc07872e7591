use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A state failed validation. `invariant` is a short stable name
    /// (`trace`, `hermitian`, `positivity`, `factors`, `bloch_norm`, `norm`).
    #[error("invalid state ({invariant}): {detail}")]
    InvalidState {
        invariant: &'static str,
        detail: String,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid document at {path}: {message}")]
    Document { path: String, message: String },
}

impl Error {
    pub(crate) fn invalid_state(invariant: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidState {
            invariant,
            detail: detail.into(),
        }
    }
}
