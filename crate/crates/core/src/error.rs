use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid offspring distribution: {0}")]
    InvalidOffspring(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation undefined on an empty population")]
    EmptyPopulation,

    #[error("trajectory resolution too coarse: step {step_h} exceeds {max}")]
    InsufficientResolution { step_h: f64, max: f64 },

    #[error("trajectory window [{start}, {end}] does not cover the requested interval")]
    WindowMismatch { start: f64, end: f64 },

    #[error("measure mismatch: {0}")]
    MeasureMismatch(String),

    #[error("martingale kind {kind} not valid for this population: {reason}")]
    KindMismatch { kind: String, reason: String },

    #[error("malformed record: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
