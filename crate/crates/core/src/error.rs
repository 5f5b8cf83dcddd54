use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report. `code()` gives the stable identifier
/// printed by the CLI (`error_code: message`) and returned by the service.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("malformed metadata: {0}")]
    MalformedMetadata(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("non-finite value in vector {0}")]
    NonFiniteVector(String),
    #[error("vector {id} has norm {norm}, outside the accepted tolerance")]
    NotUnitNorm { id: String, norm: f64 },
    #[error("duplicate product id {0}")]
    DuplicateId(String),
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("mean of nearest neighbours is degenerate (norm {0:e})")]
    DegenerateMean(f64),
    #[error("unknown prompt {0:?}")]
    UnknownPrompt(String),
    #[error("catalog has {available} products, {requested} requested")]
    InsufficientCatalog { requested: usize, available: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("direction has no signal (snr norm {0:e})")]
    ZeroSignal(f64),
    #[error("traversal step collapsed (norm {0:e})")]
    DegenerateStep(f64),
    #[error("unknown seed product {0:?}")]
    UnknownSeed(String),
    #[error("unknown product {0:?}")]
    UnknownProduct(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedHeader(_) => "MalformedHeader",
            Error::MalformedMetadata(_) => "MalformedMetadata",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::NonFiniteVector(_) => "NonFiniteVector",
            Error::NotUnitNorm { .. } => "NotUnitNorm",
            Error::DuplicateId(_) => "DuplicateId",
            Error::IoFailure { .. } => "IoFailure",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::EmptyCatalog => "EmptyCatalog",
            Error::DegenerateMean(_) => "DegenerateMean",
            Error::UnknownPrompt(_) => "UnknownPrompt",
            Error::InsufficientCatalog { .. } => "InsufficientCatalog",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::ZeroSignal(_) => "ZeroSignal",
            Error::DegenerateStep(_) => "DegenerateStep",
            Error::UnknownSeed(_) => "UnknownSeed",
            Error::UnknownProduct(_) => "UnknownProduct",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::IoFailure {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn dim(expected: usize, found: usize) -> Self {
        Error::DimMismatch { expected, found }
    }
}
