use thiserror::Error;

/// Errors raised by problem construction, the engines and the theory evaluators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("invalid optimum: {0}")]
    InvalidOptimum(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("strict momentum tuning is malformed at T = {t}: A*T^-(a-b)/b = {value:.4} > 1; smallest valid T is {min_t}")]
    StrictTuningInvalid { t: u64, value: f64, min_t: u64 },

    #[error("non-finite value at coordinate {coordinate}, step {step}")]
    NonFinite { coordinate: usize, step: u64 },

    #[error("dense mode supports d <= {max}, got {got}")]
    DenseTooLarge { max: usize, got: usize },

    #[error("rate fit needs at least 3 usable points, got {0}")]
    TooFewPoints(usize),

    #[error("rate fit needs positive risks, got {0}")]
    NonPositiveRisk(f64),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
