use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Batch cannot be used for the requested statistic (too few rows, non-finite entries).
    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Input does not satisfy the contract of the operation (e.g. not standardized).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
}

pub(crate) fn dim_err(what: impl Into<String>) -> Error {
    Error::Dimension(what.into())
}
