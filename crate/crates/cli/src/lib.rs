//! Front end for `gdnn-core`: configuration, dataset import, feature and
//! checkpoint files, and the `gdnn` subcommands.

pub mod app;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod container;
pub mod dataset;
pub mod error;
pub mod features;
pub mod import;
pub mod sweep;

pub use config::{LoadedConfig, RunConfig};
pub use error::{CliError, Result};
