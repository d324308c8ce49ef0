use thiserror::Error;

use crate::des::SimTime;

/// Errors surfaced by the simulator and its models.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("event scheduled in the past: at {at} but clock is {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },

    #[error("frame encoding error: {0}")]
    Encoding(String),

    #[error("no transmit power pair closes the link")]
    Infeasible,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("protocol invariant violated: {0}")]
    Invariant(String),

    #[error("jain index undefined for an all-zero allocation")]
    UndefinedFairness,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
