use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("inadmissible parameters: {predicate} violated ({detail})")]
    Domain { predicate: String, detail: String },

    #[error("precondition {condition} fails at {point:?} (value {value:.6e})")]
    Precondition {
        condition: String,
        point: Vec<f64>,
        value: f64,
    },

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
