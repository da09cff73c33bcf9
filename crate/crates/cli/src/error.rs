use interspec::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(clap::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Process exit statuses.
pub mod exit {
    pub const CONFIG: u8 = 2;
    pub const INGESTION: u8 = 3;
    pub const NUMERIC: u8 = 4;
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => exit::CONFIG,
            CliError::Core(e) => match e {
                Error::Io { .. }
                | Error::Parse { .. }
                | Error::Coverage { .. }
                | Error::Version { .. }
                | Error::Checksum
                | Error::Format(_)
                | Error::Checkpoint(_) => exit::INGESTION,
                Error::Singular
                | Error::Divergence { .. }
                | Error::Degenerate(_)
                | Error::Infeasible(_)
                | Error::Rank(_)
                | Error::Numeric(_) => exit::NUMERIC,
                Error::Domain(_) | Error::Shape(_) | Error::Contract(_) | Error::Split(_) | Error::Config(_) => {
                    exit::CONFIG
                }
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}
