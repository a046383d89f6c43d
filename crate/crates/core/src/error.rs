use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("series is empty")]
    EmptySeries,

    #[error("negative count at index {0}")]
    NegativeCount(usize),

    #[error("event index {index} is outside a series of length {len}")]
    T0OutOfRange { index: i64, len: usize },

    #[error("window ({lo}, {hi}) is not inside the series")]
    WindowOutOfRange { lo: i64, hi: i64 },

    #[error("invalid window: lo {lo} > hi {hi}")]
    InvalidWindow { lo: i64, hi: i64 },

    #[error("horizon {horizon} needs {horizon} points after the event, only {available} available")]
    HorizonOutOfRange { horizon: usize, available: usize },

    #[error("lag {lag} exceeds step index {m}")]
    LagExceedsIndex { m: usize, lag: usize },

    #[error("zero base raised to fractional power {exponent}")]
    ZeroBaseFractionalPower { exponent: f64 },

    #[error("Poisson mean must be positive and finite, got {0}")]
    NonPositiveMean(f64),

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("need at least {needed} points to fit, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("optimizer did not converge after {evaluations} evaluations")]
    NonConvergence { evaluations: usize },

    #[error("Fisher information is singular or ill-conditioned (condition number {condition:e})")]
    SingularFisher { condition: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("event label or index `{0}` not found")]
    T0NotFound(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Stable machine-readable name, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptySeries => "EmptySeries",
            Error::NegativeCount(_) => "NegativeCount",
            Error::T0OutOfRange { .. } => "T0OutOfRange",
            Error::WindowOutOfRange { .. } => "WindowOutOfRange",
            Error::InvalidWindow { .. } => "InvalidWindow",
            Error::HorizonOutOfRange { .. } => "HorizonOutOfRange",
            Error::LagExceedsIndex { .. } => "LagExceedsIndex",
            Error::ZeroBaseFractionalPower { .. } => "ZeroBaseFractionalPower",
            Error::NonPositiveMean(_) => "NonPositiveMean",
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::SingularFisher { .. } => "SingularFisher",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Parse { .. } => "ParseError",
            Error::T0NotFound(_) => "T0NotFound",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
