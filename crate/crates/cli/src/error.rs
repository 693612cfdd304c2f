use thiserror::Error;

use dyson_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = Result<T, CliError>;

pub const EXIT_FAILED_CHECKS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

impl CliError {
    /// Bad input is a usage error whether clap or the library caught it.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e {
                CoreError::InvalidPartition(_)
                | CoreError::IndexOutOfRange { .. }
                | CoreError::DimensionMismatch { .. }
                | CoreError::PartitionTooLong { .. }
                | CoreError::DegreeCap { .. }
                | CoreError::InvalidTheta(_)
                | CoreError::NotOrdered(_)
                | CoreError::TiedLevels(..)
                | CoreError::Config(_) => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            },
            CliError::Io(_) | CliError::Json(_) => EXIT_RUNTIME,
        }
    }
}
