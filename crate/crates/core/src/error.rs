use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frame too small: {width}x{height}, need at least {min_width}x{min_height}")]
    FrameTooSmall {
        width: usize,
        height: usize,
        min_width: usize,
        min_height: usize,
    },

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate geometry: normal matrix condition {condition:.3e} over {samples} samples")]
    DegenerateGeometry { condition: f64, samples: usize },

    #[error("no alignment: correlation peak {peak:.3} below {threshold}")]
    NoAlignment { peak: f64, threshold: f64 },

    #[error("flow field {index} has no valid pixels")]
    NoValidPixels { index: usize },

    #[error("scene invariant violated: {0}")]
    Scene(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("format error: {0}")]
    Malformed(String),

    #[error("looming map mode mismatch: file has {found}, expected {expected}")]
    ModeMismatch { found: String, expected: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn malformed(msg: impl Into<String>) -> Self {
        Error::Malformed(msg.into())
    }

    /// Attaches a path to a format error raised by a stream reader.
    pub(crate) fn at_path(self, path: &std::path::Path) -> Self {
        match self {
            Error::Malformed(message) => Error::Format {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        }
    }
}
