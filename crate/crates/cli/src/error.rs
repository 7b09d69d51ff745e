use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments; exits with status 2.
    #[error("usage: {0}")]
    Usage(String),

    #[error("data: {0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] fastdecor::Error),

    #[error(transparent)]
    Train(#[from] fastdecor_train::TrainError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(fastdecor::Error::Config(_)) => 2,
            CliError::Train(fastdecor_train::TrainError::Config(_)) => 2,
            _ => 1,
        }
    }
}
