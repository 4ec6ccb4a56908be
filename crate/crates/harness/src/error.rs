use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] maskforge::Error),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}: {message}", .path.display())]
    DimMismatch { path: PathBuf, message: String },

    #[error("malformed rle in {}: {message}", .path.display())]
    MalformedRle { path: PathBuf, message: String },

    #[error("{}: {message}", .path.display())]
    Dataset { path: PathBuf, message: String },

    #[error("defect simulation failed: {0}")]
    Simulation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("image error on {}: {source}", .path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("io error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {}: {source}", .path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("toml error in {}: {source}", .path.display())]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            return HarnessError::MissingFile(path);
        }
        HarnessError::Io { path, source }
    }

    pub(crate) fn dataset(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        HarnessError::Dataset {
            path: path.into(),
            message: message.into(),
        }
    }
}
