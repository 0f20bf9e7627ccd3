//! Error type shared by every layer of the model.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ElmError>;

#[derive(Debug, Error)]
pub enum ElmError {
    /// Operand dimensions do not line up.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A matrix that must be inverted is numerically singular.
    #[error("singular matrix in {0}")]
    Singular(&'static str),

    /// The singular value decomposition did not converge.
    #[error("SVD failed to converge")]
    NoConvergence,

    /// A classifier node whose activation collapsed to zero while residual remains.
    #[error("degenerate classifier node: activation has zero norm")]
    DegenerateNode,

    #[error("mode error: {0}")]
    Mode(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    /// Failure inside one benchmark repetition.
    #[error("repetition {index}: {source}")]
    Repetition {
        index: usize,
        #[source]
        source: Box<ElmError>,
    },
}

impl ElmError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        ElmError::Shape {
            op,
            detail: detail.into(),
        }
    }
}
