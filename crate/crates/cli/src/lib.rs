//! Experiment harness for the multimode NLSE tooling: configuration,
//! orchestration and result files.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_run, cmd_tables, run_many, Manifest, RunOutcome, TablesOutcome};
pub use config::{load, resolve, ExperimentConfig, Resolved, RunKind, Sources};
pub use error::{CliError, CliResult};
