use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box [{x}, {y}, {w}, {h}]: {reason}")]
    InvalidBox {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        reason: &'static str,
    },

    #[error("layout has {len} elements, maximum is {max}")]
    TooManyElements { len: usize, max: usize },

    #[error("no samples to evaluate")]
    NoSamples,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("metric undefined: {0}")]
    Undefined(&'static str),

    #[error("need at least 2 feature rows to fit a Gaussian, got {0}")]
    TooFewRows(usize),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("cost matrix has {rows} rows but only {cols} columns")]
    TooManyRows { rows: usize, cols: usize },

    #[error("feature provider `{provider}` failed: {reason}")]
    Provider { provider: String, reason: String },

    #[error("training diverged at step {step}: {what} is not finite")]
    Diverged { step: usize, what: &'static str },

    #[error("annotation error in {location}: {reason}")]
    Annotation { location: String, reason: String },

    #[error("feature file: {reason} (at byte offset {offset})")]
    FeatureFile { offset: u64, reason: String },

    #[error("raster decode: {0}")]
    Raster(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
