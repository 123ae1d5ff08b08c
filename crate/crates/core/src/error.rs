use thiserror::Error;

/// Errors raised by the simulation and verification routines.
#[derive(Debug, Error)]
pub enum ErwError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parameter p = {p} outside the {regime} regime ({range})")]
    Regime {
        regime: &'static str,
        range: &'static str,
        p: f64,
    },

    #[error("horizon too short: need {needed} steps, paths have {available}")]
    HorizonTooShort { needed: usize, available: usize },

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("sampling mode mismatch: expected {expected}, params say {actual}")]
    ModeMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("zero variance input")]
    ZeroVariance,

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed path dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ErwError>;
