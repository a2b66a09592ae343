//! Std companion to `cmrr-core`: binary file formats for corpora,
//! checkpoints, and indices; the `cmrr` command-line interface; wall-clock
//! latency benchmarking; and the one-shot reproduction suite.

pub mod args;
pub mod bench;
pub mod commands;
pub mod files;
pub mod json;
pub mod reproduce;
pub mod runcfg;

use std::fmt;

/// CLI-level error split by exit code: validation problems exit 1, I/O and
/// file-format problems exit 2.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "{msg}"),
            CliError::Io(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<cmrr_core::Error> for CliError {
    fn from(err: cmrr_core::Error) -> Self {
        CliError::Validation(err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
