use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Cholesky failed even at the largest jitter.
    #[error("matrix not positive definite at theta (log scale) {log_theta:?}")]
    NotPositiveDefinite { log_theta: Vec<f64> },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for errors caused by the numbers rather than by the caller.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NotPositiveDefinite { .. } | Error::Numerical(_))
    }
}
