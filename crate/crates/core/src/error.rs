use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid factor index {index} for a matrix with {count} factors")]
    InvalidFactor { index: usize, count: usize },

    #[error("matrix is not Hermitian (max |M - M^H| = {0:e})")]
    NotHermitian(f64),

    #[error("Kraus operators are not trace preserving (residual {0:e})")]
    NotTracePreserving(f64),

    #[error("parameter `{name}` = {value} outside {range}")]
    ParameterOutOfRange {
        name: String,
        value: f64,
        range: String,
    },

    #[error("unknown tag `{0}`")]
    UnknownTag(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unitaries do not form a group (closure residual {0:e})")]
    NotAGroup(f64),

    #[error("size limit exceeded: {0}")]
    Overflow(String),

    #[error("structural mismatch between object and free set: {0}")]
    Structural(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("verification failed: {what} (residual {residual:e}, tolerance {tolerance:e})")]
    Verification {
        what: String,
        residual: f64,
        tolerance: f64,
    },

    #[error("degenerate game: payoff range {0:e} is too small to canonicalize")]
    DegenerateGame(f64),

    #[error("game has negative rewards; discrimination form needs nonnegative rewards")]
    NegativeRewards,

    #[error("schema error: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
