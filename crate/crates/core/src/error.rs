use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration; detected before any round runs.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called out of order or with out-of-range arguments.
    #[error("usage error: {0}")]
    Usage(String),

    /// Observed data violates a validated bound.
    #[error("data error: {0}")]
    Data(String),

    #[error("numerical fault at round {round}: {message}")]
    Numerical { round: usize, message: String },

    /// A guaranteed run-level property did not hold.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
