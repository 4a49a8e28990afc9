//! Manifest-driven evaluation of representation sources: file formats,
//! the parallel evaluation pipeline and the `fairlens` command line.

pub mod cli;
mod error;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod table;

pub use error::{CliError, Result};
