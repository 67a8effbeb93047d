use thiserror::Error;

/// Errors returned by the fitting toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("too few data: need at least {needed}, got {found}")]
    TooFewData { needed: usize, found: usize },
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("problem size outside the supported range: {0}")]
    Guard(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
