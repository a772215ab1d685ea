//! Configuration, file formats and subcommands of the `invkit` binary.
//!
//! Exit codes: 0 success, 2 configuration or validation error, 3 I/O
//! failure, 4 numerical failure.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use config::Config;
pub use error::{CliError, CliResult};
