use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // Input data.
    #[error("unit {unit}, part {part}, dtc {dtc}: failed unit has no {what} record in the window")]
    MissingAlignment {
        unit: usize,
        part: usize,
        dtc: usize,
        what: &'static str,
    },
    #[error("unit {unit}, part {part}, dtc {dtc}: ordering violated (d={d}, s={s}, p={p})")]
    OrderingViolation {
        unit: usize,
        part: usize,
        dtc: usize,
        d: f64,
        s: f64,
        p: f64,
    },
    #[error("part {part}: no failures inside the observation window")]
    EmptyFailureSet { part: usize },
    #[error("part {part}, dtc {dtc}: units {units:?} appear both as failed and as future units")]
    Disjointness {
        part: usize,
        dtc: usize,
        units: Vec<usize>,
    },
    #[error("unit {unit}, part {part}: ground truth missing")]
    MissingTruth { unit: usize, part: usize },
    #[error("{0}")]
    InvalidInput(String),
    #[error("{file}:{line}: {message}")]
    Schema {
        file: PathBuf,
        line: u64,
        message: String,
    },
    #[error("missing input {0}")]
    MissingFile(PathBuf),

    // Numerics.
    #[error("value {0} outside [0, 1)")]
    Domain(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("sampler initialization failed: log density is -inf after {0} retries")]
    Initialization(usize),
    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),
    #[error("R-hat needs at least two chains, got {0}")]
    InsufficientChains(usize),
    #[error("degenerate dependency parameters: {0}")]
    Degenerate(String),

    // Configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error families, used by the binary to pick its exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Domain(_)
            | Error::DimensionMismatch(_)
            | Error::Initialization(_)
            | Error::UnknownParameter(_)
            | Error::InsufficientChains(_)
            | Error::Degenerate(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}
