use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: kernel expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point coordinate {value} outside the kernel domain [0, 1]")]
    OutsideDomain { value: f64 },

    #[error("kernel `{0}` has no declared bound; supply c_k explicitly when constructing it")]
    MissingBound(String),

    #[error("invalid kernel specification `{0}`")]
    KernelSpec(String),

    #[error("invalid algorithm specification `{0}`")]
    AlgorithmSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("protocol violation at round {round}: |y| = {y_abs} exceeds Y = {y_bound}")]
    ProtocolViolation { round: usize, y_abs: f64, y_bound: f64 },

    #[error("observe called without a pending prediction")]
    NoPendingPrediction,

    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("malformed input at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse { line, message: e.to_string() }
    }
}
