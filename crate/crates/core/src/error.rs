use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the pipeline can report. Variants are grouped by the stage
/// that raises them so the CLI can name the stage in its diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("format error in {path} at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("render error at frame {frame}: {message}")]
    Render { frame: usize, message: String },

    #[error("square-wave fit failed: {0}")]
    Fit(String),

    #[error("scan structure mismatch: {0}")]
    Structure(String),

    #[error("compose failed: {0}")]
    Compose(String),

    #[error("white balance failed: {0}")]
    Balance(String),

    #[error("segmentation found no cores (otsu level {otsu_level}): {message}")]
    Segmentation { otsu_level: u8, message: String },

    #[error("labeling failed: {0}")]
    Labeling(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("prediction import failed at row {row}: {message}")]
    Import { row: usize, message: String },

    #[error("aggregation failed: {0}")]
    Aggregation(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: msg.into(),
        }
    }
}
