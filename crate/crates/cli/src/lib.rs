//! Command-line front end and read-only HTTP search service for trialsearch.

pub mod commands;
pub mod server;

pub use commands::{run, Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] trialsearch::Error),

    #[error("server: {0}")]
    Server(#[from] std::io::Error),
}
