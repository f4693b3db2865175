use thiserror::Error;

/// Errors produced anywhere in the optimisation stack.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("cell ({depth}, {index}) is already expanded")]
    AlreadyExpanded { depth: usize, index: u64 },

    #[error("budget of {budget} rounds exhausted")]
    BudgetExhausted { budget: usize },

    #[error("no depth up to {h_max} satisfies the budget condition; the bound is vacuous")]
    NoFeasibleDepth { h_max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
