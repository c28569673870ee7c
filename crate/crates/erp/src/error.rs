use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Numerical(String),

    #[error(transparent)]
    Core(#[from] erp_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Process exit status: 1 usage, 2 data validation, 3 numerical failure.
    pub fn exit_code(&self) -> u8 {
        use erp_core::Error as C;
        match self {
            Error::Usage(_) => 1,
            Error::Numerical(_) => 3,
            Error::Core(C::InvalidArgument(_)) => 1,
            Error::Core(
                C::Singular { .. } | C::NoConvergence { .. } | C::Overflow | C::UndefinedRSquared,
            ) => 3,
            _ => 2,
        }
    }
}
