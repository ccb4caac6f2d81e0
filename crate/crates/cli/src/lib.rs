//! Configuration, pipeline and report writers for the `landau` command.

pub mod config;
pub mod output;
pub mod pipeline;
