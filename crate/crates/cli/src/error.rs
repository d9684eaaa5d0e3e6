// SPDX-License-Identifier: Apache-2.0

use std::fmt;

/// Failure classes mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration.
    Usage(String),
    /// Inputs missing or failing validation.
    Invalid(String),
    /// A model endpoint or external tool failed.
    External(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Invalid(_) => 1,
            CliError::External(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Invalid(m) => write!(f, "invalid input: {m}"),
            CliError::External(m) => write!(f, "external failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub fn invalid(e: impl fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}
