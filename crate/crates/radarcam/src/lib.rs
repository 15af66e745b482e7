//! File formats, configuration, the per-frame pipeline and the `radarcam`
//! command line on top of `radarcam-core`.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod render;

pub use error::{CliError, Result};
