use std::io;
use std::path::PathBuf;

use rowspace_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{0}: no data lines")]
    EmptyFile(PathBuf),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{method} diverged")]
    Diverged { method: String },

    #[error("trace has no gamma values")]
    NoGammaData,

    #[error(transparent)]
    Numerical(#[from] CoreError),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Diverged { .. } => 2,
            HarnessError::Parse { .. } | HarnessError::EmptyFile(_) => 3,
            HarnessError::Numerical(_) | HarnessError::NoGammaData => 4,
            HarnessError::Io { .. } | HarnessError::Csv(_) => 5,
        }
    }
}
