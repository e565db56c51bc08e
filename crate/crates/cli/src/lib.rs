//! Library side of the `poolforge` binary: run configuration, results files
//! and the subcommand implementations.

pub mod commands;
pub mod config;
pub mod results;
