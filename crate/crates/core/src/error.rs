use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Text that is not a MAC address in any accepted notation.
    #[error("invalid MAC address {input:?}: {reason}")]
    Parse { input: String, reason: &'static str },

    /// More unique items were requested than the source can supply.
    #[error("cannot draw {requested} unique addresses from a range of {available}")]
    Capacity { requested: u64, available: u64 },

    /// An argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A policy, parameter set or configuration that violates its invariants.
    #[error("invalid configuration: {0}")]
    Validation(String),

    /// Memory or entropy could not be obtained.
    #[error("resource error: {0}")]
    Resource(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
