use thiserror::Error;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    /// Partial failure (bench) or any error without a more specific code.
    pub const FAILURE: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const CAPACITY: i32 = 3;
    pub const CONFIG_MISMATCH: i32 = 4;
    pub const IO: i32 = 5;
    /// Malformed or unsupported input data.
    pub const DATA: i32 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Capacity(_) => exit::CAPACITY,
            CliError::ConfigMismatch(_) => exit::CONFIG_MISMATCH,
            CliError::Io { .. } => exit::IO,
            CliError::Data(_) => exit::DATA,
            CliError::Failed(_) => exit::FAILURE,
        }
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

impl From<kemeny_core::Error> for CliError {
    fn from(e: kemeny_core::Error) -> Self {
        use kemeny_core::Error as E;
        match e {
            E::Capacity { .. } => CliError::Capacity(e.to_string()),
            E::InvalidSpec(_) | E::InvalidConfig(_) => CliError::Usage(e.to_string()),
            E::InvalidRanking(_) | E::LengthMismatch { .. } | E::InvalidProfile(_) | E::Ingestion { .. } => {
                CliError::Data(e.to_string())
            }
            E::Convergence { .. } => CliError::Failed(e.to_string()),
        }
    }
}

impl From<kemeny_nn::Error> for CliError {
    fn from(e: kemeny_nn::Error) -> Self {
        use kemeny_nn::Error as E;
        match e {
            E::Core(inner) => inner.into(),
            E::ConfigMismatch(_) | E::Capacity { .. } => CliError::ConfigMismatch(e.to_string()),
            E::InvalidConfig(_) => CliError::Usage(e.to_string()),
            E::Io { ref path, ref source } => CliError::Io {
                path: path.clone(),
                message: source.to_string(),
            },
            E::CorruptCheckpoint(_) | E::UnsupportedVersion { .. } => CliError::Data(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
