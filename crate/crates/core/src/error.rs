use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-contract input.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is numerically singular (pivot {pivot:e} below threshold {threshold:e})")]
    Singular { pivot: f64, threshold: f64 },

    /// Every candidate bandwidth produced a curve without a single defined point.
    #[error("estimation impossible: {0}")]
    EstimationImpossible(String),

    /// Not enough data where the computation needs it.
    #[error("data starvation: {0}")]
    DataStarvation(String),

    #[error("optimizer did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("bandwidth grid is empty: {0}")]
    EmptyGrid(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
