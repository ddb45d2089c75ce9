//! HTTP server, transport, admin client and command line for servnet nodes.

pub mod cli;
pub mod client;
pub mod config;
pub mod http;
pub mod transport;

pub use http::{ServeError, ServerHandle};
