//! CLI error type and the exit-code contract: 0 success, 2 configuration
//! error, 3 numerical failure, 4 no transitions observed.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or command-line usage (exit code 2).
    Config(String),
    /// A computation failed (exit code 3, or 4 for `NoTransitions`).
    Compute(separatrix::Error),
    /// Filesystem trouble writing artifacts (exit code 3).
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(separatrix::Error::NoTransitions) => 4,
            CliError::Compute(_) | CliError::Io(_) => 3,
        }
    }

    /// Machine-readable error record printed to stderr before exiting.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Compute(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<separatrix::Error> for CliError {
    fn from(e: separatrix::Error) -> Self {
        CliError::Compute(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}
