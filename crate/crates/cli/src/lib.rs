//! Orchestration for the exo-gate toolkit: configuration, invariant checks,
//! calibrated sweeps and single-gate reports.

pub mod config;
pub mod output;
pub mod run;
pub mod verify;

/// Package version plus `git describe` of the build tree, when available.
pub const VERSION: &str = env!("EXO_GATE_VERSION");
