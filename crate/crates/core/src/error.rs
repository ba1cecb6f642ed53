use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("convention check failed: {0}")]
    Convention(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("inconsistent result: {0}")]
    Inconsistent(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("table error: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
