//! Gateway around `misc_core`: the `misc` command line and the WebSocket
//! service that a cockpit steers.

pub mod commands;
pub mod protocol;
pub mod server;

pub use commands::{run, Cli, CliError};
pub use server::{router, serve, ServerConfig};
