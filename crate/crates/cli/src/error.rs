use std::path::PathBuf;

use dsdl_core::Error as CoreError;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: bad value `{value}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("config key `{0}` is required for this command")]
    MissingKey(String),
    #[error("{origin}:{line}: expected `key = value`")]
    Syntax { origin: String, line: usize },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("gradient check failed: {0}")]
    GradCheck(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    /// 0 success, 1 usage or config, 2 numerical failure, 3 I/O or data.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 3,
            CliError::GradCheck(_) => 2,
            CliError::Core(e) => match e {
                CoreError::Divergence { .. }
                | CoreError::NonFinite { .. }
                | CoreError::NotPositiveDefinite { .. } => 2,
                CoreError::Io { .. } | CoreError::Format { .. } | CoreError::MissingToken { .. } => 3,
                _ => 1,
            },
            _ => 1,
        }
    }
}
