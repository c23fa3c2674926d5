use thiserror::Error;

/// Errors raised by the participation model, the estimators and the simulators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inputs violate a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// The requested computation exceeds a configured size or work budget.
    #[error("feasibility error: {0}")]
    Feasibility(String),

    /// An iterative method failed to converge.
    #[error("numerical error: {message} (residual {residual:e})")]
    Numerical { message: String, residual: f64 },

    /// The operation is undefined for this chain (e.g. mixing time of a periodic chain).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn feasibility(msg: impl Into<String>) -> Self {
        Error::Feasibility(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
