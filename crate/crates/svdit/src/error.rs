use std::path::PathBuf;

use thiserror::Error;

/// Errors of the std layer. [`CliError::exit_code`] maps them onto the
/// command-line contract: 2 for bad input, 1 for internal failures.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    /// A broken invariant that is not the caller's fault.
    #[error("{0}")]
    Internal(String),
    #[error(transparent)]
    Core(#[from] svdit_core::Error),
}

impl CliError {
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

    pub fn exit_code(&self) -> u8 {
        use svdit_core::Error as E;
        match self {
            CliError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            CliError::Io { .. } | CliError::Internal(_) => 1,
            CliError::Json { .. } | CliError::Format { .. } | CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                E::Dimension(_)
                | E::Bounds { .. }
                | E::InvalidParam(_)
                | E::Config(_)
                | E::DegenerateMask { .. } => 2,
                E::DegenerateRow { .. } | E::NonFinite(_) => 1,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
