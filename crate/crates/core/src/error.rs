use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("matrix is not symmetric (entry ({row}, {col}))")]
    NotSymmetric { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degrees of freedom must be positive, got {0}")]
    NonPositiveDof(f64),

    #[error("log-sum-exp of an empty or all -inf vector")]
    EmptyLogSumExp,

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("all components have zero density at the evaluation point")]
    ZeroProposalDensity,

    #[error("all importance weights are zero")]
    ZeroWeights,

    #[error("non-finite target log-density at particle {0}")]
    NonFiniteTarget(usize),

    #[error("non-finite test function value at particle {0}")]
    NonFiniteTestFunction(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
