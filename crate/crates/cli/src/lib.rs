//! Batch driver for straightening and transport-reducibility experiments:
//! config parsing, bundled fixtures, subcommand drivers and output writers.

pub mod commands;
pub mod config;
pub mod fixtures;
pub mod report;

pub use commands::{run_command, EXIT_CONFIG, EXIT_DIVERGED, EXIT_EXCLUDED, EXIT_OK};
pub use config::ExperimentConfig;
