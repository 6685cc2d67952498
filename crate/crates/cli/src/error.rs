//! Process-level failure classes, each with a fixed exit code.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// The configuration cannot be used (exit 2).
    Config(String),
    /// An iterative solver gave up (exit 3).
    Solver(String),
    /// A gated check did not hold (exit 4).
    Acceptance(String),
    /// The filesystem got in the way (exit 1).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Acceptance(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (CliError::Config(msg)
        | CliError::Solver(msg)
        | CliError::Acceptance(msg)
        | CliError::Io(msg)) = self;
        write!(f, "{msg}")
    }
}

impl From<periheat::Error> for CliError {
    fn from(err: periheat::Error) -> Self {
        let msg = err.to_string();
        match err {
            periheat::Error::NonConvergence { .. } => CliError::Solver(msg),
            _ => CliError::Config(msg),
        }
    }
}
