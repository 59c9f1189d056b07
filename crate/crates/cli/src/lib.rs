//! Batch side of the `happimeter` binary: cohort simulation, the report
//! pipeline over CSV bundles, and the server launcher.

pub mod commands;
pub mod error;
pub mod reports;

pub use error::CliError;
