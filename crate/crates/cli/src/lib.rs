//! Experiment orchestration for the `chaotrans` command-line tool.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use error::CliError;
