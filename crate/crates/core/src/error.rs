use thiserror::Error;

use crate::tariff::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tariff calendar: {0}")]
    Tariff(ValidationReport),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("resource budget exceeded: {required} evaluations requested, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    /// Continuation value failed the concavity check, so threshold search is meaningless.
    #[error("non-concave continuation at stage {stage}, dg bin {g_bin}: second difference {excess:e}")]
    NonConcave { stage: usize, g_bin: usize, excess: f64 },

    #[error("water-filling failed to bracket total {target} (capacity {capacity})")]
    Bracket { target: f64, capacity: f64 },

    #[error("policy `{policy}` emitted a non-finite action at interval {interval}")]
    NonFiniteAction { policy: String, interval: usize },

    #[error("learner diverged: {0}")]
    Divergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Tariff(_) => "tariff",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidTrace(_) => "invalid_trace",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::NonConcave { .. } => "non_concave",
            Error::Bracket { .. } => "bracket",
            Error::NonFiniteAction { .. } => "non_finite_action",
            Error::Divergence(_) => "divergence",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
