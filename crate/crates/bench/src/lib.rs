//! Experiment harness for the `borok` integrators: configuration files,
//! labelled integrator configurations, reference solutions, convergence and
//! work-precision sweeps with CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod experiment;
pub mod label;
pub mod output;
pub mod problems;
pub mod reference;

pub use cli::cli_main;
pub use config::{ConfigError, ExperimentConfig};
pub use experiment::{
    run_convergence, run_integrate, run_work_precision, ConvergenceRow, ExperimentError, RunOptions, WorkPrecisionRow,
};
pub use label::Configuration;
