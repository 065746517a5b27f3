//! Experiment runner: flat configuration files in, CSV tables, plot data,
//! a summary and a metadata sidecar out.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, ConfigError, ExperimentConfig, Kind};
pub use run::{run, RunError};
