//! Experiment runner: JSON configs, a name-keyed experiment registry, CSV and
//! JSON artifacts under `results/<experiment>/<hash>/`, and the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod experiment;
pub mod experiments;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use experiment::{Experiment, ExperimentRegistry, Outcome, RunContext, Table, TypedExperiment};
pub use runner::{execute, RunRecord};
