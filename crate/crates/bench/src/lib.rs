//! Monte-Carlo harness for the `adatrans` estimators: experiment
//! configuration, replicated fits with baselines, CSV output and summaries.

pub mod config;
pub mod error;
pub mod experiment;
pub mod methods;
pub mod output;

pub use config::{ExperimentSpec, Factor, Method, Profile, Sweep};
pub use error::{BenchError, Result};
pub use experiment::{run_experiment, ResultRow};
