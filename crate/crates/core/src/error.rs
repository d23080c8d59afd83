use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("isolated location(s) with no neighbors: {0:?}")]
    IsolatedNodes(Vec<usize>),

    #[error("phi0 = {phi0} outside the admissible interval (-{limit}, {limit})")]
    Domain { phi0: f64, limit: f64 },

    #[error("parameter vector is not causal: max root modulus {max_modulus:.6}")]
    NonCausal { max_modulus: f64 },

    #[error("singular or indefinite system: {0}")]
    Singular(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("optimizer did not converge: {0}")]
    NotConverged(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
