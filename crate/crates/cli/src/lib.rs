//! Command-line front end: configs, built-in scenarios and the runner.

pub mod config;
pub mod runner;
pub mod scenarios;

pub use config::{apply_overrides, parse_config, ConfigError, Experiment, ExperimentConfig};
pub use runner::{run_experiment, RunError, Summary};
pub use scenarios::ScenarioId;
