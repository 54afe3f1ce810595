use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("capacity exceeded: {what} is {value}, limit is {limit}")]
    Capacity {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("margin assumption violated: agent {agent} has margin {margin} (must be > 0)")]
    MarginAssumption { agent: usize, margin: f64 },

    #[error("horizon too short: exploration needs {exploration} rounds but horizon is {horizon}")]
    HorizonTooShort { exploration: usize, horizon: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    #[error("ordering violated: {0}")]
    OrderingViolated(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("config field `{field}`: {message}")]
    Constraint { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Runtime,
    Io,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::Capacity { .. }
            | Error::MarginAssumption { .. }
            | Error::HorizonTooShort { .. }
            | Error::Parse(_)
            | Error::Constraint { .. } => ErrorCategory::Validation,
            Error::Domain(_)
            | Error::DegenerateCovariance(_)
            | Error::OrderingViolated(_)
            | Error::LengthMismatch { .. } => ErrorCategory::Runtime,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => ErrorCategory::Io,
        }
    }

    pub(crate) fn constraint(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Constraint {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
