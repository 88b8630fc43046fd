use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("kernel `{kernel}` is not positive definite; {context}")]
    UnsupportedKernel { kernel: &'static str, context: String },

    #[error("privacy budget out of range: {0}")]
    BudgetOutOfRange(String),

    #[error("invalid bandwidth grid: {0}")]
    InvalidGrid(String),

    #[error("degenerate Gram matrix: {0}")]
    DegenerateGram(String),

    #[error("evaluation point t = {t} is not on the released grid")]
    OutOfGrid { t: f64 },

    #[error("bandwidth h = {h} was not released in this dataset")]
    MissingBandwidth { h: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("data error: {0}")]
    Data(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
