//! Batch front end: configuration files, runs, sweeps and the built-in
//! verification suite.

pub mod check;
pub mod config;
pub mod run;
pub mod sweep;

pub use config::{parse_config, render, ConfigError, ConfigErrors, RunConfig};
pub use run::{run, run_in, RunError, RunManifest, RunOutcome, RunReport};
pub use sweep::{parse_grid, sweep, CellSummary, GridAxis};
