//! Experiment runners behind the `gentune` command-line tool. Each runner
//! reads a TOML config, writes versioned CSV files, and returns the
//! pass/fail checks it evaluated.

// Negated comparisons are used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod ecme_demo;
pub mod error;
pub mod mnist_demo;
pub mod quantile_demo;
pub mod records;
pub mod ridge;
pub mod runner;
pub mod toy;

pub use checks::{Check, Outcome};
pub use error::{ExpError, ExpResult};
pub use runner::{run_all, run_experiment, Experiment, Overrides, RunAllReport};
