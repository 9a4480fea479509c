use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rate regime violated: gamma0 = {gamma0} must exceed 1/(2c) = {threshold}")]
    RateRegime { gamma0: f64, threshold: f64 },

    #[error("factor a_{index} = {value} is not positive")]
    NonPositiveFactor { index: usize, value: f64 },

    /// `step` is where the non-finite iterate was detected; the check is sparse.
    #[error("non-finite gradient detected by step {step}")]
    NonFiniteGradient { step: usize },

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("exact gradients are not available for this problem")]
    MissingExactGradient,

    #[error("problem has no exact proximal map for g")]
    MissingProx,

    #[error("no convergence after {iters} iterations (residual {residual})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("bound evaluated at k = {k} before burn-in index K = {burn_in}")]
    BeforeBurnIn { k: usize, burn_in: usize },

    #[error("sample schedule overflows at outer index {0}")]
    ScheduleOverflow(usize),

    #[error("sample budget {budget} is smaller than one outer iteration ({needed})")]
    BudgetTooSmall { budget: u64, needed: u64 },

    #[error("{name} = {value} must be positive")]
    Denominator { name: &'static str, value: f64 },

    #[error("step condition violated: {0}")]
    StepCondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
