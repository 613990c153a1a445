//! Experiment harness for `rowspace-core`: svmlight ingestion, CSV traces,
//! trace analysis and the `rowspace` command-line driver.

pub mod analysis;
pub mod config;
pub mod csvio;
pub mod error;
pub mod experiment;
pub mod svmlight;

pub use config::{Cli, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, RunReport};
