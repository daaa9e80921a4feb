//! Verification suites, operation-count benchmarks and the complexity table
//! behind the `ssdual` command.

pub mod bench;
pub mod config;
pub mod fit;
pub mod report;
pub mod suites;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Library(#[from] ssdual::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;
