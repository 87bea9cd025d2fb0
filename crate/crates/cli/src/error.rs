//! Error type distinguishing configuration problems (exit code 2) from
//! computation failures (exit code 1).

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// The requested run is malformed: bad flags, unreadable or invalid
    /// configuration file, parameters outside the solvers' domains, or an
    /// unusable output directory.
    Config(String),
    /// The run was well-formed but a computation failed.
    Computation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Computation(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Computation(msg) => write!(f, "computation failed: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}
