//! File formats, configuration, timing and invariant probes around
//! `monosim-core`. The `monosim` binary is a thin clap front end over these.

pub mod config;
pub mod io;
pub mod probes;
pub mod timing;
