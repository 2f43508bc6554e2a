//! CLI error classes mapped to stable exit codes.

use std::fmt;

/// Exit codes: 2 config-schema, 3 I/O, 4 compute-domain.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Domain(_) => 4,
        }
    }

    pub fn io(context: &str, err: impl fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Domain(m) => write!(f, "domain error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Core errors outside config parsing: container I/O maps to the I/O class,
/// everything else is a domain failure.
impl From<fspd_core::Error> for CliError {
    fn from(err: fspd_core::Error) -> Self {
        match &err {
            fspd_core::Error::Container(fspd_core::error::ContainerError::Io(_)) => {
                CliError::Io(err.to_string())
            }
            _ => CliError::Domain(err.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
