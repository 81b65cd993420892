use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    Lattice(String),

    #[error("coordinates ({x}, {y}) outside the {lx}x{ly} lattice")]
    OutOfRange { x: usize, y: usize, lx: usize, ly: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("{n} sites exceeds the dense oracle cap of {cap}")]
    OracleTooLarge { n: usize, cap: usize },

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("only {available} basis-state orbits satisfy the constraint, {requested} requested")]
    InsufficientStates { available: usize, requested: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("inconsistent contour: {0}")]
    Wiring(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}
