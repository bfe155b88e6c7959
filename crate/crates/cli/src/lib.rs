//! Experiment harness for split learning and federated baselines over
//! simulated wireless edge devices: configuration, orchestration and CSV
//! output.

pub mod commands;
pub mod config;
pub mod csv;
pub mod error;
pub mod prep;

pub use config::ExperimentConfig;
pub use error::{exit_code, ConfigError};
