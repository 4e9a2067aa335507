use thiserror::Error;

use crate::optimizer::FitReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A triangular factor has a zero, negative or non-finite diagonal entry.
    #[error("singular factor: diagonal entry {index} is {value}")]
    SingularFactor { index: usize, value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("fit diverged after {} iterations: {reason}", .report.iterations)]
    FitDiverged {
        reason: String,
        report: Box<FitReport>,
    },

    #[error("oracle failure at coordinate {coordinate}: {message}")]
    OracleFailure { coordinate: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
