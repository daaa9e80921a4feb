use thiserror::Error;

/// Errors reported by the structured-matrix routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch on axis {axis}: {detail}")]
    Dimension { axis: String, detail: String },

    #[error("unsupported contraction descriptor `{0}`")]
    UnsupportedContraction(String),

    #[error("matrix is singular (zero pivot at index {index})")]
    Singular { index: usize },

    #[error("normalization denominator vanishes at row {row}")]
    DegenerateRow { row: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("fixture i/o: {0}")]
    Fixture(String),
}

impl Error {
    pub(crate) fn dim(axis: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Dimension {
            axis: axis.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
