use thiserror::Error;

/// Errors raised by the library.
///
/// Contract violations (bad shapes, bad inputs) are distinguished from I/O
/// failures so the command-line front end can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum EstError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degree {requested} exceeds precomputed bound {available}")]
    DegreeBound { requested: usize, available: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl EstError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        EstError::InvalidInput(msg.into())
    }

    /// True for errors caused by the environment rather than by the caller.
    pub fn is_io(&self) -> bool {
        matches!(self, EstError::Io(_) | EstError::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, EstError>;
