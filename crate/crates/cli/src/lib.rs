//! Command-line front end: argument parsing, model registry, experiment folders,
//! Tidy CSV output, data ingestion and posterior summaries.

pub mod args;
pub mod data;
pub mod experiment;
pub mod registry;
pub mod run;
pub mod summary;
pub mod tidy;

pub use args::{parse_args, Command, RunConfig};
pub use run::{run_experiment, run_experiment_with_model, RunError, RunOutcome};
