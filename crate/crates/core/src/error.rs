use alloc::string::String;

use crate::ecl::ClassId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("class already exists: {0}")]
    DuplicateClass(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("no classes have been learned")]
    NoClasses,
    #[error("unknown class id {0}")]
    UnknownClass(ClassId),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("prompt of {prompt_tokens} tokens exceeds the {context_window}-token context window")]
    TokenLimitExceeded {
        prompt_tokens: usize,
        context_window: usize,
    },
    #[error("integrity failure: {0}")]
    IntegrityFailure(String),
}

impl Error {
    /// Stable name of the variant, used in CLI diagnostics and reports.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::DuplicateClass(_) => "DuplicateClass",
            Error::EmptyInput(_) => "EmptyInput",
            Error::NoClasses => "NoClasses",
            Error::UnknownClass(_) => "UnknownClass",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::BackendUnavailable(_) => "BackendUnavailable",
            Error::TokenLimitExceeded { .. } => "TokenLimitExceeded",
            Error::IntegrityFailure(_) => "IntegrityFailure",
        }
    }
}
