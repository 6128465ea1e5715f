//! Batch experiment runner behind the `bernfield` binary.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{ConfigError, Experiment, ExperimentConfig};
pub use report::report;
pub use runner::{run, RunSummary};
