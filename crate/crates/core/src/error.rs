use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("depth {depth} m outside partition range [{min}, {max}] m")]
    OutOfRange { depth: f64, min: f64, max: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("probabilities sum to {sum} at pixel {pixel:?}, tolerance {tolerance}")]
    NotNormalized {
        sum: f64,
        pixel: Option<(usize, usize)>,
        tolerance: f64,
    },

    #[error("probability {value} outside [0, 1] at pixel ({row}, {col})")]
    InvalidProbability { value: f64, row: usize, col: usize },

    #[error("mask selects no pixels")]
    EmptyMask,

    #[error("no evaluable pixels under the evaluation policy")]
    EmptyEvaluation,

    #[error("non-positive depth {value} at pixel ({row}, {col})")]
    NonPositiveDepth { value: f64, row: usize, col: usize },

    #[error("invalid depth {value} at pixel ({row}, {col})")]
    InvalidDepth { value: f64, row: usize, col: usize },

    #[error("numerical abort at step {step} (lr {lr}, pixel {pixel:?}): {detail}")]
    NumericalAbort {
        step: usize,
        lr: f64,
        pixel: Option<(usize, usize)>,
        detail: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic {found:?}, expected \"DPM1\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported DPM file version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("unknown config key \"{0}\"")]
    UnknownKey(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
