use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library reports. Variants map one-to-one onto the
/// stable status codes exposed by the C interface.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({lat}, {lon}) lies outside the grid")]
    OutOfBounds { lat: f64, lon: f64 },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("trajectory has no observed hour")]
    AllMissing,

    #[error("infeasible clustering: {points} points cannot fill {clusters} clusters of at least {min_size}")]
    Infeasible {
        points: usize,
        clusters: usize,
        min_size: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("hour {hour} of matrix '{owner}' carries no probability mass")]
    ZeroSlice { owner: String, hour: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("distribution has zero total mass")]
    ZeroMass,

    #[error("trajectory too short: need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("label mismatch: {0}")]
    LabelMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("insufficient coverage: {0}")]
    InsufficientCoverage(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input or configuration rather
    /// than by a failure while running. The CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::ConfigInvalid(_) | Error::Parse { .. } | Error::Infeasible { .. } => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
