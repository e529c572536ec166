//! Experiment harness around `rkn-core`: dataset generation, training,
//! evaluation, comparison tables and SVG plots.

pub mod commands;
pub mod config;
pub mod error;
pub mod estimator;
pub mod plot;

pub use error::{CliError, CliResult};
