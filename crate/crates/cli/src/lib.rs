//! Command-line front end for the FADE toolkit: record-file validation,
//! metric reports and the toy scenarios.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod scenario;

pub use cli::Args;
pub use error::{exit, CliError};
