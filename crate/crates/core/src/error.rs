use thiserror::Error;

/// Errors raised by the group kernels, dynamics and scenario driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not an element of {group}: {reason}")]
    NotInGroup { group: &'static str, reason: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("inertia matrix is singular or not positive-definite at t = {t}")]
    SingularInertia { t: f64 },

    /// `agent` is 0-based; the message uses the 1-based file numbering.
    #[error("inertia of agent{} lost positive-definiteness at t = {t} (min eigenvalue {min_eig:e})", .agent + 1)]
    InertiaNotPositive { agent: usize, t: f64, min_eig: f64 },

    #[error("non-finite value in {what} at step {step} (t = {t})")]
    NonFinite { what: String, step: usize, t: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// True for aborts caused by the numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::InertiaNotPositive { .. } | Error::SingularInertia { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
