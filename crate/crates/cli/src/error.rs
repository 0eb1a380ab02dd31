use std::path::PathBuf;

use cloud_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{}: {msg}", path.display())]
    ConfigFile { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
}

/// Process exit codes, one per error category.
pub mod exit {
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const MISSING_FILE: u8 = 4;
    pub const VERSION: u8 = 5;
    pub const INTEGRITY: u8 = 6;
    pub const DATA: u8 = 7;
    pub const NUMERIC: u8 = 8;
    pub const INTERNAL: u8 = 9;
    pub const IO: u8 = 10;
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::ConfigFile { .. } => exit::CONFIG,
            CliError::Core(e) => match e {
                CoreError::Config(_) => exit::CONFIG,
                CoreError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => exit::MISSING_FILE,
                CoreError::Io { .. } => exit::IO,
                CoreError::Version { .. } => exit::VERSION,
                CoreError::Integrity { .. } => exit::INTEGRITY,
                CoreError::Data(_) | CoreError::EmptyCorpus | CoreError::Json { .. } => exit::DATA,
                CoreError::NonFinite(_) => exit::NUMERIC,
                CoreError::Tensor(_) | CoreError::Contract(_) => exit::INTERNAL,
            },
        }
    }
}
