//! Front end for the `magtorq` binary: configuration loading and the
//! `simulate`, `analyze` and `montecarlo` workflows.

pub mod commands;
pub mod config;

pub use commands::{analyze, montecarlo, simulate, CliError};
pub use config::{ConfigError, RunConfig};
