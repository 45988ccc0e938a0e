use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("disjoint grids")]
    DisjointGrids,

    #[error("degenerate SPD")]
    DegenerateSpd,

    #[error("invalid spectral grid: {0}")]
    InvalidGrid(String),

    #[error("invalid SPD: {0}")]
    InvalidSpd(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty generator")]
    EmptyGenerator,

    #[error("invalid generator config: {0}")]
    InvalidGenConfig(String),

    #[error("zeroth order has no wavelength selectivity")]
    ZerothOrder,

    #[error("invalid wavelength: {0} nm")]
    InvalidWavelength(f64),

    #[error("invalid grating parameters: {0}")]
    InvalidGrating(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("degenerate prediction")]
    DegeneratePrediction,

    #[error("undefined correlation")]
    UndefinedCorrelation,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed PFM: {0}")]
    MalformedPfm(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }

    /// Whether the failure stems from bad user input (files, flags, configs)
    /// rather than a numeric or internal fault.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::DegenerateSpd
                | Error::DegeneratePrediction
                | Error::UndefinedCorrelation
                | Error::EmptyGenerator
                | Error::Png(_)
        )
    }
}
