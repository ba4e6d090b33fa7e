//! Campaign runner, verification suites and ratio-envelope calibration on
//! top of `rsnorm-core`. The `rsnorm` binary is a thin clap front end.

pub mod calibration;
pub mod campaign;
pub mod report;
pub mod verify;

pub use campaign::{evaluate, run_campaign, CampaignConfig, CampaignItem, Quantity, Settings};
pub use report::{render, Format, Record};

use std::fmt;

/// Failure modes mapped onto process exit codes by [`CliError::exit_code`].
#[derive(Debug)]
pub enum CliError {
    /// Unknown pattern, quantity or malformed input (exit 2).
    Usage(String),
    /// A computation could not run (exit 2).
    Core(rsnorm_core::Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<rsnorm_core::Error> for CliError {
    fn from(e: rsnorm_core::Error) -> Self {
        match e {
            rsnorm_core::Error::Parse(m) => CliError::Usage(m),
            other => CliError::Core(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
