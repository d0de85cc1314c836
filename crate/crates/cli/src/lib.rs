//! Experiment runner: TOML configs, subcommands and report bundles.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::CliError;
