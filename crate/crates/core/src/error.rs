use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, PbcoError>;

#[derive(Debug, Error)]
pub enum PbcoError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parameter net would exceed the maximum of {max} points")]
    NetTooLarge { max: usize },

    #[error("parameter net is empty")]
    EmptyNet,

    #[error("ball of radius {radius} does not meet the prediction slab [{lo}, {hi}]")]
    EmptyIntersection { radius: f64, lo: f64, hi: f64 },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("smoothed density at the sampled prediction is {0}, expected > 0")]
    NonPositiveDensity(f64),

    #[error("loss {loss} outside the declared range [{lo}, {hi}]")]
    LossOutOfRange { loss: f64, lo: f64, hi: f64 },

    #[error("bandit oracle queried more than once in round {round}")]
    OracleReused { round: usize },

    #[error("round {round} outside horizon {horizon}")]
    RoundOutOfRange { round: usize, horizon: usize },

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<PbcoError>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
