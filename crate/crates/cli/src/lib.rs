//! Experiment harness for the `dampwave` command-line tool: configuration,
//! orchestration of the solvers and probes, deterministic CSV output and a
//! hashed manifest of every produced file.

pub mod config;
pub mod emit;
pub mod error;
pub mod harness;
pub mod recipes;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use harness::{run, Command, RunOutcome};
