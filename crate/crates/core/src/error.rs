use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid volume header: {0}")]
    InvalidHeader(String),

    #[error("index {index} out of range on axis {axis} (extent {extent})")]
    OutOfRange {
        axis: char,
        index: usize,
        extent: usize,
    },

    #[error("invalid label value {0}")]
    InvalidLabel(u8),

    #[error("malformed code {text:?}: {reason}")]
    MalformedCode { text: String, reason: &'static str },

    #[error("phantom: {0}")]
    Phantom(String),

    #[error("no lumen voxels in volume")]
    NoLumen,

    #[error("objective evaluated to a non-finite value")]
    NonFiniteObjective,

    #[error("trachea fit failed: {0}")]
    TracheaFit(String),

    #[error("constant feature column {0:?}")]
    ConstantColumn(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("need both classes present to train")]
    SingleClass,

    #[error("number of components {k} out of range 1..={max}")]
    ComponentsOutOfRange { k: usize, max: usize },

    #[error("missing angle {0}")]
    MissingAngle(String),

    #[error("scaler required: this model carries no training means/standard deviations")]
    ScalerRequired,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
