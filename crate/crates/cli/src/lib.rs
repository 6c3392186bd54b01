//! Config-driven experiment runner: presets, paired TCL-2 runs, bound reports
//! and oracle validation, with deterministic CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod runner;

pub use config::{parse_config, parse_config_str, ExperimentConfig};
pub use error::CliError;
