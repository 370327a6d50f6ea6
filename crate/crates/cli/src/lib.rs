//! Pipeline driver for the retirement models: solve, simulate and analyze
//! from one flat config file, with a checksum manifest in the output
//! directory.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::CliError;
