//! Batch experiment runner: configs, seeded runs, sweeps, and audits.

pub mod audit;
pub mod config;
pub mod io;
pub mod run;
pub mod sweep;

pub use audit::{audit_result, audit_run, AuditReport};
pub use config::{Engine, ExperimentConfig};
pub use run::{run, simulate, RunOptions, RunResult};
pub use sweep::{fit_power_law, sweep, ExponentFit, PowerFit, SweepReport};
