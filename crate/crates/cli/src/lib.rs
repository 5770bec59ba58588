//! Command-line front end of `rabi-otto`: configuration files, subcommands and
//! CSV output with `.meta` sidecars.

pub mod config;
pub mod output;
pub mod run;

pub use config::{Config, ConfigError};
pub use run::{execute, Command, Outcome, RunConfig};
