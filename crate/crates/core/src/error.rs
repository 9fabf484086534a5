use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("taxonomy error: {0}")]
    Taxonomy(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate segment: {0}")]
    DegenerateSegment(String),

    #[error("missing feature for video {video_id} ({modality}) at t={timestamp}")]
    MissingFeature {
        video_id: String,
        modality: String,
        timestamp: f64,
    },

    #[error("feature backend error: {0}")]
    Backend(String),

    #[error("sequence length {len} exceeds maximum {max}")]
    Length { len: usize, max: usize },

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: non-finite loss")]
    Divergence { epoch: usize, batch: usize },

    #[error("fold {fold_id} failed: {source}")]
    Fold {
        fold_id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Unwraps fold wrappers to the underlying cause.
    pub fn root(&self) -> &Error {
        match self {
            Error::Fold { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
