use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: byte {offset}: {reason}", path.display())]
    Format { path: PathBuf, offset: u64, reason: String },
    #[error("{}:{line}: {reason}", path.display())]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] pla_core::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, reason: impl ToString) -> Self {
        Self::Parse { path: path.into(), line, reason: reason.to_string() }
    }

    /// Process exit status: 2 for numeric failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(pla_core::Error::NonFiniteLoss { .. }) => 2,
            _ => 1,
        }
    }
}
