use alloc::string::String;

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Operand shapes disagree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A softmax row has no active entries.
    #[error("row {row} has no active entries")]
    DegenerateRow { row: usize },
    /// A block mask has a row with no active blocks.
    #[error("mask row {row} has no active blocks")]
    DegenerateMask { row: usize },
    #[error("index {index} out of range (len {len})")]
    Bounds { index: usize, len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    /// Head groups, configs or plant directives that do not fit the model.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! dim_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Dimension(alloc::format!($($arg)*))
    };
}

pub(crate) use dim_err;
