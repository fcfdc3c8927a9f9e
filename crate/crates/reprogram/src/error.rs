//! Crate-wide error type.

use crate::train::TrainTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor or layer dimensions do not line up.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// A layout or mapping asks for more room than the source side offers.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A configuration value violates its documented constraints.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Binary checkpoint or wire payload could not be decoded.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Dataset-level problem (ragged rows, labels out of range, empty input).
    #[error("data error: {0}")]
    Data(String),

    /// A value that must be finite turned out NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// One of the dimensional assumptions of reprogramming is violated.
    #[error("assumption violated: {0}")]
    Assumption(String),

    /// The requested operation is not available in the active mode.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The black-box endpoint replied with something other than the expected frame.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// The black-box endpoint died or the stream broke mid-batch.
    #[error("transport error after {served} rows served: {message}")]
    Transport { served: usize, message: String },

    /// Training produced a NaN loss; the per-epoch trace up to the failure is attached.
    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged {
        epoch: usize,
        message: String,
        trace: Box<TrainTrace>,
    },

    /// The frozen model's parameter digest changed. This should be impossible
    /// and indicates a serious bug.
    #[error("frozen-model violation: {0}")]
    Frozen(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
