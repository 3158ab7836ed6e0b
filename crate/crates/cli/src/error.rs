use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes. Usage errors from argument parsing also exit with 2.
pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] colagnn::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        use colagnn::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_DATA,
            CliError::Core(e) => match e {
                E::Config(_) => EXIT_CONFIG,
                E::Parse { .. } | E::Validation(_) | E::Window { .. } | E::Checkpoint(_) | E::Io { .. } => EXIT_DATA,
                E::Numerical(_) => EXIT_NUMERICAL,
                E::Shape { .. } | E::Contract(_) => EXIT_INTERNAL,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
