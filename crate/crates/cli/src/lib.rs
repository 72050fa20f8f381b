//! Experiment runner behind the `ssmlab` binary: config files, training
//! pipelines, sweeps and the report subcommands.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod reports;
pub mod sweep;

pub use config::{ConfigError, ExperimentConfig};
pub use error::CliError;
