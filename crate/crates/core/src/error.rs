use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("texture not found: {0}")]
    TextureNotFound(PathBuf),
    #[error("unsupported texture format: {0}")]
    UnsupportedTexture(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("degenerate extent: mesh bounding box has zero size")]
    DegenerateExtent,
    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("negative density {0} at sample")]
    NegativeDensity(f64),
    #[error("image: {0}")]
    Image(String),
    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },
    #[error("backward pass does not match forward cache: {0}")]
    CacheMismatch(String),
    #[error("step {step} outside schedule range 0..={total}")]
    StepOutOfRange { step: usize, total: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no cameras")]
    NoCameras,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Usage and configuration problems, as opposed to internal failures.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::TextureNotFound(_)
                | Error::UnsupportedTexture(_)
                | Error::InvalidMesh(_)
                | Error::DegenerateExtent
                | Error::Config(_)
                | Error::NoCameras
                | Error::Format { .. }
        )
    }
}
