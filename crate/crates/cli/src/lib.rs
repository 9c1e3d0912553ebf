//! Library side of the `hermstable` binary: config schema, commands and report writers.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{CliError, CliResult, RunContext};
