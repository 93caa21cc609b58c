//! Command-line front end: track ingestion, JSON configuration, commands and
//! reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod validate;

pub use commands::{Invocation, TOOL, VERSION};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
