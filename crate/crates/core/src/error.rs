use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("budget exceeded: {needed} candidate evaluations, budget {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("no decomposition within residual tolerance at rank {rank} (best residual {residual:e})")]
    NoDecomposition { rank: usize, residual: f64 },

    #[error("last factor is not the scalar field: {0}")]
    NotScalarFactor(String),

    #[error("tensor space too large: total dimension {total} exceeds limit {limit}")]
    TooLarge { total: usize, limit: usize },

    #[error("linear program failed: {0}")]
    LinearProgram(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
