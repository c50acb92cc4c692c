use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] inca_core::Error),
    #[error("{}: {source}", path.display())]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    ParseFailure {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("integrity failure: {0}")]
    IntegrityFailure(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }

    /// Stable error name for diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Core(e) => e.name(),
            Error::IoFailure { .. } => "IoFailure",
            Error::ParseFailure { .. } => "ParseFailure",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::IntegrityFailure(_) => "IntegrityFailure",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }
}
