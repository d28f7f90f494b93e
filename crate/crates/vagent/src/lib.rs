//! Command-line front end for `vagent-core`: run configuration, checkpoints,
//! dataset and sample file formats, and the `vagent` subcommands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod formats;
