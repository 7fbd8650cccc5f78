use std::path::{Path, PathBuf};

/// Failure of a command, carrying its process exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
}

impl CliError {
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => Self::USAGE,
            _ => Self::DATA,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Prefixes data errors with the item they concern.
    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::Data(msg) => CliError::Data(format!("{what}: {msg}")),
            CliError::Usage(msg) => CliError::Usage(format!("{what}: {msg}")),
            other => other,
        }
    }
}

impl From<instmatte::Error> for CliError {
    fn from(e: instmatte::Error) -> Self {
        match e {
            instmatte::Error::Usage(msg) => CliError::Usage(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
