//! Text formats and subcommands behind the `obfuskit` binary.

pub mod commands;
pub mod error;
pub mod format;
pub mod instance;
pub mod mechanism;

pub use commands::{Cli, Command};
pub use error::{CliError, ExitCode};
