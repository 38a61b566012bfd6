use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the feedback-code library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: expected {expected} samples in {what}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("step index {index} out of range 1..={max}")]
    StepOutOfRange { index: usize, max: usize },

    #[error("power normalization has no calibration constants")]
    MissingCalibration,

    #[error("non-finite gradient at coordinate {index} ({name}); loss = {loss}")]
    NonFiniteGradient {
        index: usize,
        name: String,
        loss: f64,
    },

    #[error("k-means asked for {k} clusters but only {points} points were given")]
    TooFewPoints { k: usize, points: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
