//! Command-line front end: configuration, CSV ingestion and the `fit`,
//! `compare`, `diagnose` and `simulate` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;

pub use error::CliError;
