//! Experiment harness for `afn-core`: dataset generation and file formats,
//! experiment drivers, JSON reports and the `afn` command line.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod report;
