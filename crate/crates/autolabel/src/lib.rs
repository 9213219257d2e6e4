//! File formats, manifests, configuration and the command line for
//! `autolabel-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod planes;
pub mod pnm;

pub use error::{Error, Result};
