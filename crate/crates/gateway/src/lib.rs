//! Command line and network face of the storyteller: session registry,
//! HTTP/WebSocket API and the `storybolt` CLI.

pub mod cli;
pub mod service;
pub mod sessions;
