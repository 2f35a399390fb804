use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spin quantum number {0}: 2s must be a non-negative integer")]
    InvalidSpin(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigensolver failed at field ({bx:.6}, {by:.6}, {bz:.6}) mT: {reason}")]
    Eigensolver {
        bx: f64,
        by: f64,
        bz: f64,
        reason: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numeric failures map to exit code 2, everything else to 1.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Eigensolver { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
