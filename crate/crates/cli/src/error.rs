use std::path::PathBuf;

use copaint_core::Error as CoreError;

/// Process exit codes.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// 3 for failures of the numerics (non-finite values, unstable or
    /// singular steps), 2 for everything the caller can fix.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(CoreError::NonFinite { .. } | CoreError::UnstableStep { .. } | CoreError::Singular(_)) => {
                EXIT_NUMERIC
            }
            _ => EXIT_USAGE,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
