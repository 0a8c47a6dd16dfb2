use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {what} ({left:?} vs {right:?})")]
    ShapeMismatch { what: &'static str, left: (usize, usize), right: (usize, usize) },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("empty sample")]
    EmptySample,

    #[error("validation failed for {layer} of `{id}`: {reason}")]
    Validation { id: String, layer: &'static str, reason: String },

    #[error("missing {layer} for `{id}` (expected {path})")]
    MissingLayer { id: String, layer: &'static str, path: PathBuf },

    #[error("training diverged at iteration {iter}: {component} is not finite")]
    Divergence { iter: usize, component: &'static str },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ShapeMismatch { .. }
                | Error::Invalid(_)
                | Error::EmptySample
                | Error::Validation { .. }
                | Error::MissingLayer { .. }
                | Error::Config(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
