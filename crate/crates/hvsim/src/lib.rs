//! File formats, reports and the command line for `hvsim-core` models.

pub mod cli;
pub mod config;
pub mod descriptor;
pub mod error;
pub mod report;
pub mod tables;

pub use crate::error::{HarnessError, Result};
