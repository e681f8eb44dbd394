use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid calibration for camera {camera:?}: {reason}")]
    InvalidCalibration { camera: String, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("need at least 2 camera views, got {0}")]
    TooFewViews(usize),

    #[error("duplicate person id {0} within one frame")]
    DuplicatePersonId(u32),

    #[error("grid geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("unknown skeleton {0:?} (expected body13, coco17 or wholebody133)")]
    UnknownSkeleton(String),

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}
