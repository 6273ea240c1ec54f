//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CottadError>;

#[derive(Debug, Error)]
pub enum CottadError {
    /// Shapes fed to an operation are inconsistent. `detail` names the
    /// offending dimension.
    #[error("{op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// Invalid layer, model, or run configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An operation produced a non-finite value in verification mode.
    #[error("{op} produced a non-finite value in verify64 mode")]
    NonFinite { op: &'static str },

    /// A text input failed to parse. Line numbers are 1-based.
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    /// A binary container (CTEN, PPM) is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// Training loss became non-finite.
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CottadError {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        CottadError::Shape {
            op,
            detail: detail.into(),
        }
    }
}
