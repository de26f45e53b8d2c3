//! File formats, CSV ingestion, parallel drivers and the command-line front
//! end for the `privfly-core` pipeline.

pub mod checkpoint;
pub mod cli;
pub mod data;
mod error;
pub mod parallel;
pub mod report;

pub use error::{Error, Result};
