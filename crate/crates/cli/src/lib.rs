//! Command implementations behind the `radarnet` binary.

pub mod pipeline;
pub mod server;
