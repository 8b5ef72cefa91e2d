use std::path::PathBuf;

/// Front-end failure, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("segmentation failed: {0}")]
    Algorithm(colorseg::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// 1 for algorithmic failures, 2 for I/O and configuration problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Algorithm(_) => 1,
            _ => 2,
        }
    }
}

impl From<colorseg::Error> for CliError {
    fn from(e: colorseg::Error) -> Self {
        match e {
            colorseg::Error::InvalidConfig(m) => CliError::Config(m),
            colorseg::Error::DimensionMismatch { .. } => CliError::Input(e.to_string()),
            other => CliError::Algorithm(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
