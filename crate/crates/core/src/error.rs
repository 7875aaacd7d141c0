use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("distribution has no atoms")]
    EmptyDistribution,
    #[error("negative probability {0}")]
    NegativeProbability(f64),
    #[error("probabilities sum to {0}, expected 1")]
    ProbabilitySumMismatch(f64),
    #[error("risk level {0} outside its admissible range")]
    AlphaOutOfRange(f64),
    #[error("smoothing parameter {0} outside (0, 1]")]
    KappaOutOfRange(f64),
    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-finite input")]
    NonFiniteInput,

    #[error("bad CSV header: {0:?}")]
    BadHeader(String),
    #[error("non-numeric field in row {row}: {field:?}")]
    NonNumericField { row: usize, field: String },
    #[error("conflicting rewards for duplicate transition ({s}, {a}, {next})")]
    DuplicateRewardConflict { s: usize, a: usize, next: usize },
    #[error("negative probability in row {0}")]
    RowProbabilityNegative(usize),
    #[error("transition probabilities of ({s}, {a}) sum to {sum}")]
    StochasticityViolation { s: usize, a: usize, sum: f64 },
    #[error("dangling index: {0}")]
    DanglingIndex(String),

    #[error("non-finite value produced or supplied")]
    NonFiniteValue,
    #[error("value table not non-decreasing in the risk index at state {s}, action {a}")]
    MonotonicityViolation { s: usize, a: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("enumeration budget exceeded: {needed} > {budget}")]
    BudgetExceeded { needed: u64, budget: u64 },

    #[error("value tensor horizon {available} shorter than requested {requested}")]
    HorizonMismatch { available: usize, requested: usize },
    #[error("discount factor 0 is not supported here")]
    GammaZero,
    #[error("discount factor 1 is not supported here")]
    GammaOne,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("step size {0} must lie in (0, 1] for a relaxation step")]
    BetaOutOfRange(f64),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Coarse classification used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad parameters or configuration.
    Config,
    /// Malformed or inconsistent input data.
    Data,
    /// A numerical precondition failed during computation.
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            AlphaOutOfRange(_) | KappaOutOfRange(_) | ParamOutOfRange(_) | GammaZero | GammaOne
            | BetaOutOfRange(_) | TooFewSamples { .. } | HorizonMismatch { .. } => ErrorClass::Config,
            EmptyDistribution
            | NegativeProbability(_)
            | ProbabilitySumMismatch(_)
            | BadHeader(_)
            | NonNumericField { .. }
            | DuplicateRewardConflict { .. }
            | RowProbabilityNegative(_)
            | StochasticityViolation { .. }
            | DanglingIndex(_)
            | LengthMismatch(..)
            | ShapeMismatch(_)
            | IndexOutOfRange(_)
            | Io { .. } => ErrorClass::Data,
            NonFiniteInput | NonFiniteValue | MonotonicityViolation { .. } | BudgetExceeded { .. } => {
                ErrorClass::Numerical
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
