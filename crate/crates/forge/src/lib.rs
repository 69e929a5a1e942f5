//! Experiment runner for pivot-based low-resource translation on top of
//! `forge-core`: the checkpoint file format, configuration, corpus files,
//! declarative recipes with a data-usage audit, results tables and the
//! `forge` command line.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod recipes;
pub mod results;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::{ForgeError, Result};
