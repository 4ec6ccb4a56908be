//! Operational shell around `maskforge`: configuration, dataset ingestion,
//! defect simulation, reports and the `maskforge` command line.

pub mod backend;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod defects;
pub mod error;
pub mod report;
pub mod tasks;

pub use error::{HarnessError, Result};
