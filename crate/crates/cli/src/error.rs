use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] lindkraus::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    /// A monitored CPTP property failed. For IF runs this means a bug, not physics.
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    /// Process exit code: 3 for invariant violations, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invariant(_) => 3,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
