use thiserror::Error;

use crate::params::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(ValidationReport),

    #[error("unknown scenario `{0}` (expected scenario1, scenario1_inhomogeneous or scenario2)")]
    UnknownScenario(String),

    #[error("transition matrix is not ergodic")]
    NonErgodic,

    #[error("matrix of {requested} entries exceeds the budget of {budget}")]
    BudgetExceeded { requested: u128, budget: usize },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("ambiguous matching: {0}")]
    AmbiguousMatching(String),

    #[error("inconsistent input: {0}")]
    Inconsistent(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty matrix")]
    EmptyMatrix,

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
