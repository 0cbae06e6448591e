//! Batch experiment runner: `analyze`, `simulate`, `verify` and `sweep`
//! over TOML experiment configs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
mod error;
pub mod topofile;
pub mod verify;

pub use commands::{run, Cli, Command, CHI_CONVENTION, SWEEP_COLUMNS};
pub use config::Config;
pub use error::{CliError, Result};
