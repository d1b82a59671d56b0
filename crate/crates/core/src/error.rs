use thiserror::Error;

/// Errors produced by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("shape error: expected dimension {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("index error: {0}")]
    Index(String),

    #[error("operator validity error: {0}")]
    Operator(String),

    #[error("decomposition error: matrix {matrix:?} is not representable on the stencil directions")]
    Decomposition { matrix: [[f64; 2]; 2] },

    #[error("numerical error: {message}")]
    Numerical {
        message: String,
        /// Active policy index per interior point at the time of failure.
        policy_snapshot: Vec<usize>,
    },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
