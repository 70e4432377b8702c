use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::hurdat::{HurdatError, SelectionError};

/// Everything that makes a command fail; all map to exit code 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{file}: line {line}: {msg}")]
    Samples { file: String, line: u64, msg: String },

    #[error("HURDAT2: {0}")]
    Hurdat(#[from] HurdatError),

    #[error("track selection: {0}")]
    Selection(#[from] SelectionError),

    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] dkappa_core::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
