//! Front end for the tile synchronization simulator: run configuration,
//! subcommands and report rendering.

pub mod commands;
pub mod config;
pub mod report;
