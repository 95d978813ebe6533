use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("bandwidth must be non-negative, got {0} Hz")]
    NegativeBandwidth(f64),

    #[error("bandwidth must be strictly positive, got {0} Hz")]
    NonPositiveBandwidth(f64),

    #[error("distance must be strictly positive, got {0} m")]
    NonPositiveDistance(f64),

    #[error("user cannot reach the secrecy threshold: {rate_at_max_bps} bps at full bandwidth < {required_bps} bps")]
    InfeasibleUser {
        rate_at_max_bps: f64,
        required_bps: f64,
    },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("schedule has no users")]
    EmptySchedule,

    #[error("batch is empty")]
    EmptyBatch,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("supervised training requires labels for every sample")]
    MissingLabels,

    #[error("brute-force oracle supports at most 3 users, got {0}")]
    OracleTooLarge(usize),

    #[error("unknown policy tag `{0}`")]
    UnknownPolicy(String),

    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            what,
            msg: msg.into(),
        }
    }
}
