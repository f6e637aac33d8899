//! Experiment drivers: configuration, sampling, single linkage and CSV output.

pub mod config;
pub mod dendrogram;
pub mod output;
pub mod run;
pub mod sampling;

pub use config::ExperimentConfig;
pub use run::{exit_code, run, Command, Overrides, RunOutcome};
