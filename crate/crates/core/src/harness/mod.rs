//! Campaign orchestration: instance manifests, the append-only record log,
//! the bounded worker pool and report rendering.

mod config;
mod log;
mod manifest;
mod report;
mod runner;

pub use config::*;
pub use log::*;
pub use manifest::*;
pub use report::*;
pub use runner::*;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}:{line}: {message}")]
    Manifest { origin: String, line: usize, message: String },
    #[error("{path}:{line}: {message}")]
    Log { path: PathBuf, line: usize, message: String },
    #[error("refusing to resume {path}: {detail}")]
    LogMismatch { path: PathBuf, detail: String },
    #[error("empty campaign: {0}")]
    EmptyCampaign(String),
    #[error("invalid campaign configuration: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
}
