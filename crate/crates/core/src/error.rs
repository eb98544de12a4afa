use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform for the named operation.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// API misuse: backward on a non-scalar, stepping without gradients, etc.
    #[error("usage error: {0}")]
    Usage(String),

    /// An argument value violates a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration field failed validation.
    #[error("invalid config field `{field}`: {detail}")]
    Config { field: String, detail: String },

    /// Standardizing a (near-)constant series.
    #[error("degenerate variance: series is constant within tolerance")]
    DegenerateVariance,

    /// Threshold calibration cannot proceed.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// A loss or score became non-finite.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    /// Structured-text parse failure, with the byte offset of the defect.
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
