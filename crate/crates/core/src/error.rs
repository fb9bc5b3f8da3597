use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied data has the wrong shape or contains non-finite values.
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// An internal precondition between two calls was violated.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("training diverged: non-finite {what} at index {index}")]
    Divergence { what: String, index: usize },

    #[error("evaluation diverged: {0}")]
    EvaluationDivergence(String),

    #[error("unusable dataset: {0}")]
    UnusableDataset(String),

    #[error("undefined empirical model: {0}")]
    UndefinedModel(String),

    #[error("unsupported discount {0}: bound requires gamma < 1")]
    UnsupportedDiscount(f64),

    #[error("unavailable oracle: {0}")]
    UnavailableOracle(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn rejected(msg: impl Into<String>) -> Self {
        Error::RejectedInput(msg.into())
    }

    pub(crate) fn divergence(what: impl Into<String>, index: usize) -> Self {
        Error::Divergence {
            what: what.into(),
            index,
        }
    }
}
