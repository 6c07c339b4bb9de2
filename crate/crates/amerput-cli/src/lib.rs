//! Library side of the `amerput` command-line tool: configuration, the
//! five commands, and their CSV/report writers.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{ModelKind, ModelParams, Overrides, RunConfig};
pub use error::{CliError, CliResult};
