use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
///
/// `Config` errors describe a bad experiment setup and map to exit code 1
/// in the CLI; everything else is a runtime failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{what}: expected {expected} values, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("episode already finished; call reset before stepping")]
    StepAfterDone,

    #[error("invalid layer {layer}: network has {layers} layers")]
    InvalidLayer { layer: usize, layers: usize },

    #[error("optimizer protocol violation: {0}")]
    Protocol(String),

    #[error("weights were mutated: checksum {found} does not match recorded {recorded}")]
    WeightChecksum { recorded: String, found: String },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("evaluation failed at generation {generation}: {reason} (genome dumped to {dump})")]
    Evaluation {
        generation: usize,
        reason: String,
        dump: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::LengthMismatch { .. } | Error::InvalidLayer { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
