use thiserror::Error;

/// Errors raised by the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: entry {index} is {value} (masses must be finite and >= 0)")]
    InvalidMass { index: usize, value: f64 },

    #[error("invalid distribution: masses sum to {sum}, expected 1 within 1e-12")]
    NotNormalized { sum: f64 },

    #[error("empty distribution")]
    Empty,

    #[error("kernel row {row} is not a probability vector: {reason}")]
    InvalidKernel { row: usize, reason: String },

    #[error("absolute continuity violated at atom {index}: p={p} but q=0")]
    AbsoluteContinuity { index: usize, p: f64 },

    #[error("alphabet mismatch: {0} vs {1}")]
    AlphabetMismatch(usize, usize),

    #[error("unknown axis `{0}`")]
    UnknownAxis(String),

    #[error("information quantity {value} is below -1e-12; this indicates a bug")]
    NegativeInformation { value: f64 },

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("undefined observable loss at (y={y}, s={s}): the cell has zero probability")]
    UndefinedCell { y: usize, s: usize },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
