//! Shared error type for the whole library.

use std::fmt;

/// Errors surfaced by tensor ops, estimators, environments, and training.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor shapes are incompatible for the requested operation.
    Shape(String),
    /// Operation requires a scalar (or specific-rank) node and got something else.
    Rank(String),
    /// Softmax/relaxation temperature must be strictly positive.
    InvalidTemperature(f64),
    /// Input contained NaN or another out-of-contract value.
    InvalidInput(String),
    /// A gradient contained NaN/Inf; the optimizer step was skipped.
    NonFiniteGradient(String),
    /// A training loss came out non-finite; the update was aborted.
    NonFiniteLoss(String),
    /// Invalid configuration value (estimator kind, K, grid size, ...).
    Config(String),
    /// An agent issued an action index outside its action space.
    InvalidAction { agent: usize, action: usize, arity: usize },
    /// Exact enumeration requested beyond the supported category count.
    EnumerationLimit { n: usize, max: usize },
    /// A statistic needs more samples than were provided.
    InsufficientSamples(String),
    /// An aggregate was requested over an empty collection.
    EmptyInput(String),
    /// Filesystem or serialization failure.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Error::Rank(msg) => write!(f, "rank error: {msg}"),
            Error::InvalidTemperature(tau) => {
                write!(f, "invalid temperature: tau must be > 0, got {tau}")
            }
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::NonFiniteGradient(msg) => write!(f, "non-finite gradient: {msg}"),
            Error::NonFiniteLoss(msg) => write!(f, "non-finite loss: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::InvalidAction { agent, action, arity } => {
                write!(f, "agent {agent} issued action {action}, arity is {arity}")
            }
            Error::EnumerationLimit { n, max } => {
                write!(f, "enumeration limited to {max} categories, got {n}")
            }
            Error::InsufficientSamples(msg) => write!(f, "insufficient samples: {msg}"),
            Error::EmptyInput(msg) => write!(f, "empty input: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
