use thiserror::Error;

use crate::pipeline::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two objects that must share an alphabet do not.
    #[error("alphabet mismatch in {context}: expected size {expected}, found {found}")]
    AlphabetMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("pipeline failed validation:\n{0}")]
    InvalidPipeline(ValidationReport),

    #[error("solver failure at beta={beta}: {message}")]
    Solver { beta: f64, message: String },

    #[error("polynomial fit failed: {0}")]
    FitFailure(String),

    /// The distortion-magnitude premise of the two-step bound does not hold.
    #[error("precondition violated: {message}; offending pairs {pairs:?}")]
    Precondition {
        message: String,
        pairs: Vec<(usize, usize)>,
    },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn mismatch(context: &'static str, expected: usize, found: usize) -> Self {
        Error::AlphabetMismatch {
            context,
            expected,
            found,
        }
    }
}
