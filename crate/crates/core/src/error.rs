use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data (CSV, config, arguments).
    #[error("invalid input: {0}")]
    Input(String),

    /// The data does not carry what the requested model needs.
    #[error("model/data mismatch: {0}")]
    ModelMismatch(String),

    /// Exhaustive enumeration would be too large.
    #[error("enumeration guard exceeded: {0}")]
    EnumerationTooLarge(String),

    /// An estimator or solver could not produce a usable value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The simulator produced no captured units.
    #[error("empty sample: no unit was captured")]
    EmptySample,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error came from the data or arguments rather than from numerics.
    pub fn is_input(&self) -> bool {
        !matches!(self, Error::Numerical(_) | Error::EmptySample)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
