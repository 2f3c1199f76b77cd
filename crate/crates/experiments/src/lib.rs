//! Monte Carlo sweeps of simulated missions.
//!
//! A [`SweepSpec`] expands into cells; each cell runs a number of paired
//! missions in which every arm (strategy and robot weights) meets the same
//! simulated human and the same threat field.

pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod runner;
pub mod spec;
pub mod stats;
pub mod sweep;

pub use error::{ExperimentError, Result};
pub use runner::{execute, SweepReport};
pub use spec::{SweepKind, SweepSpec};
pub use sweep::{run_sweep, CellResult, RunOutcome};
