//! Serving layer over `gqr-core`: gateway config, the HTTP server, and
//! the `gqr` command line.

pub mod cli;
pub mod config;
pub mod server;
