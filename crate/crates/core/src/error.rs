use thiserror::Error;

use crate::engine::SimTime;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("causality violation: cannot schedule at {requested} when clock is {now}")]
    Causality { now: SimTime, requested: SimTime },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("unknown file id {0}")]
    UnknownFile(usize),

    #[error("protocol violation at {at} (txn {txn}): {detail}")]
    Protocol { at: SimTime, txn: u64, detail: String },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl SimError {
    pub fn config(key: &str, reason: impl Into<String>) -> Self {
        SimError::Config {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input rather than a simulator fault.
    pub fn is_config(&self) -> bool {
        matches!(self, SimError::Config { .. } | SimError::InvalidArgument(_))
    }
}
