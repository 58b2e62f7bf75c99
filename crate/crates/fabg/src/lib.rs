//! Experiment runner, file IO, and command-line front end for `fabg-core`.

pub mod compare;
pub mod config;
pub mod experiment;
pub mod io;

pub use compare::{compare_summary, compare_values, reduction_percent, Comparison, MetricVerdict};
pub use config::{ConfigError, ExperimentConfig};
pub use experiment::{run_cells, run_experiment, CellOutcome, RunSummary};
