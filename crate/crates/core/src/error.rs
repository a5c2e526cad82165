use thiserror::Error;

/// Errors raised by the accounting, mechanism, composition and pipeline layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid Renyi order {0}: must be finite and > 1")]
    InvalidOrder(f64),
    #[error("invalid privacy budget {0}: must be >= 0 and not NaN")]
    InvalidBudget(f64),
    #[error("invalid sensitivity {0}: must be finite and > 0")]
    InvalidSensitivity(f64),
    #[error("invalid variance {0}")]
    InvalidVariance(f64),
    #[error("invalid delta {0}: must lie in (0, 1)")]
    InvalidDelta(f64),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("privacy budget decreased from {previous} to {requested}")]
    DecreasingBudget { previous: f64, requested: f64 },
    #[error("session has no releases yet")]
    EmptySession,
    #[error("Renyi order changed mid-session")]
    OrderChanged,
    #[error("session already driven by the {0} sampler")]
    MethodMismatch(&'static str),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("probabilities do not form a distribution: {0}")]
    NotADistribution(String),
    #[error("check budget exhausted after {0} invocations")]
    CheckBudgetExhausted(usize),
    #[error("stopping rule used after it halted")]
    UseAfterHalt,
    #[error("optimisation did not converge: {0}")]
    NonConvergence(String),
    #[error("non-finite summand encountered at sample {0}")]
    NonFiniteSummand(usize),
    #[error("outcome space too large: {0} joint outcomes")]
    OutcomeSpaceOverflow(usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no witness found: {0}")]
    SearchExhausted(String),
    #[error("train and validation splits overlap at row {0}")]
    OverlappingSplits(usize),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("empty data: {0}")]
    EmptyData(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
