//! Library side of the benchmark CLI: experiment configs, runners, the
//! theorem battery, report artifacts and SVG emission.

pub mod config;
pub mod plots;
pub mod report;
pub mod runner;
pub mod theorems;

pub use config::{ExperimentConfig, ExperimentKind};
pub use report::RunReport;
pub use runner::{emit_plots, run_experiment, run_theorem_suite};
