use std::fmt;

use sqwp_core::Error;

/// Failure of a run, carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad config or arguments. Exit code 2.
    Validation(String),
    /// Blowup, degenerate record or other integration failure. Exit code 3.
    Numerical(String),
    /// Filesystem trouble. Exit code 1.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Numerical(_) => 3,
            Self::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Validation(m) => write!(f, "invalid configuration: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
            Self::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Unsupported(_) => Self::Validation(e.to_string()),
            Error::NumericalBlowup { .. } | Error::DegenerateRecord { .. } | Error::IntegrationFailure(_) => {
                Self::Numerical(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
