//! Command-line front end: configuration parsing, subcommands and artifact
//! writing for the `ddsim` binary.

pub mod commands;
pub mod config;

use serde::Serialize;

pub use config::{ConfigError, RunConfig};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const ACCURACY: i32 = 3;
    pub const CONSTRAINT: i32 = 4;
}

/// A failed command, serialised to standard error as one JSON object.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    pub exit_code: i32,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            error: "config",
            message: message.into(),
            line: None,
            exit_code: exit::CONFIG,
        }
    }

    pub fn constraint(message: impl Into<String>) -> Self {
        Self {
            error: "constraint",
            message: message.into(),
            line: None,
            exit_code: exit::CONSTRAINT,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", self.error))
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self {
            error: "config",
            message: e.message,
            line: e.line,
            exit_code: exit::CONFIG,
        }
    }
}

impl From<ddcore::Error> for Failure {
    fn from(e: ddcore::Error) -> Self {
        use ddcore::Error as E;
        let (error, exit_code) = match &e {
            E::Accuracy { .. } => ("accuracy", exit::ACCURACY),
            E::Convergence(_) => ("convergence", exit::ACCURACY),
            E::Io(_) => ("io", exit::OTHER),
            E::Domain(_) => ("domain", exit::CONFIG),
            E::Range { .. } => ("range", exit::CONFIG),
            E::Parameter(_) => ("parameter", exit::CONFIG),
            E::Divergence(_) => ("divergence", exit::CONFIG),
            E::Unsupported(_) => ("unsupported", exit::CONFIG),
            E::Size(_) => ("size", exit::CONFIG),
            E::Resolution(_) => ("resolution", exit::CONFIG),
        };
        Self {
            error,
            message: e.to_string(),
            line: None,
            exit_code,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self {
            error: "io",
            message: e.to_string(),
            line: None,
            exit_code: exit::OTHER,
        }
    }
}
