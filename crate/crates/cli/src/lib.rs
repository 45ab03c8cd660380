//! Experiment front end for the `pursuit` binary: configuration, the
//! subcommands and their CSV outputs.

pub mod commands;
pub mod config;
pub mod table;

pub use config::{EnvironmentKind, ExperimentConfig};

/// Version string embedded in every output header.
pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or invalid configuration (exit code 1).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input table (exit code 2).
    #[error("input error: {0}")]
    Input(String),

    /// Missing cache without `--auto-build` (exit code 2).
    #[error("{0}")]
    MissingCache(String),

    #[error(transparent)]
    Core(#[from] pursuit_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }
}
