//! Configuration ingestion, subcommand dispatch, run persistence, and the
//! executable invariant suite for the plate model.

pub mod check;
pub mod config;
pub mod runner;

pub use config::{parse_config, ConfigError, RunConfig};
pub use runner::{run, Subcommand};
