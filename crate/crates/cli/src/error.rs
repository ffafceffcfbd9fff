use cox_intensity::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 input error, 4 estimation impossible, 5 optimizer failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e {
                CoreError::EstimationImpossible(_) | CoreError::DataStarvation(_) | CoreError::Singular { .. } => 4,
                CoreError::NonConvergence { .. } => 5,
                _ => 2,
            },
            _ => 2,
        }
    }
}
