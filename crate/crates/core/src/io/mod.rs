//! Configuration files, output tables and the command workflows.

pub mod commands;
pub mod config;
pub mod table;

pub use commands::{
    run_integrate, run_simulate, run_steady, run_verify, Check, CommandError, CommandOutput,
};
pub use config::{default_initial, ConfigError, Overrides, RunConfig};
pub use table::{format_number, Report, Table, TableError};
