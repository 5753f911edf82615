//! Experiment harness: gridworld sweeps, CSV output, SVG figures and the
//! property verification suite.

pub mod config;
pub mod gen;
pub mod plot;
pub mod record;
pub mod stats;
pub mod sweep;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("bound invariant violated: {0}")]
    Invariant(String),
    #[error("{0}")]
    Core(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
