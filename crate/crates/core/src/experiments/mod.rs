//! Experiment driver: configuration, the convergence studies and reports.

pub mod config;
pub mod report;
pub mod sweep;

pub use config::ExperimentConfig;
pub use report::{emit_report, read_results};
pub use sweep::{
    forward_convergence, run_forward_convergence, run_posterior_sweep, EpsilonRecord, ForwardRecord, SweepResult,
};
