//! File formats and command plumbing around [`crvae_core`]: CSV data and
//! adjacency tables, checkpoint files, JSON configs, metric reports and run
//! manifests.

mod error;
pub mod cli;
pub mod files;
pub mod manifest;
pub mod report;

pub use crvae_core as core;
pub use error::{Error, Result};
