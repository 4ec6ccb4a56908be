use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate dimensions {width}x{height}")]
    Dimension { width: u32, height: u32 },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("{0}: mask has no foreground")]
    EmptyMask(&'static str),

    #[error("format error: {0}")]
    Format(String),

    #[error("query feature has zero norm")]
    DegenerateFeature,

    #[error("no prompt enabled")]
    NoPrompt,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("failed to load graph {}: {message}", .file.display())]
    GraphLoad { file: PathBuf, message: String },

    #[error("unsupported manifest format version {found} (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },

    #[error("model execution failed: {0}")]
    Model(String),

    #[error("io error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
