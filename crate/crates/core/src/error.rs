//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("graph generation failed: {0}")]
    Generation(String),
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("observation sampling failed: {0}")]
    Sampling(String),
    #[error("metric undefined: {0}")]
    Metric(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
