use osband_id::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: u64, message: String },

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] CoreError),

    /// Output was produced but the run did not meet its check.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Parse { .. } | CliError::Io { .. } => 2,
            CliError::Failed(_) => 1,
            CliError::Core(e) => match e {
                CoreError::NonConverged { .. } | CoreError::EmptyRoot => 3,
                CoreError::SingularCovariance { .. } | CoreError::InsufficientData { .. } => 4,
                CoreError::SingularBattery { .. } => 5,
                CoreError::InconsistentPair { .. } => 1,
                _ => 2,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
