//! File formats, subcommands and synthetic fixtures for the `lesion` tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod synth;

pub use error::{Error, Result};
