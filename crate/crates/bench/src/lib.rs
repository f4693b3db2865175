//! Experiment harness for the `gpoo` crate: configuration files, parallel
//! multi-trial runs, S/K sweeps, theory diagnostics and CSV/JSON output.

pub mod config;
pub mod diagnostics;
pub mod experiment;
pub mod format;
pub mod report;

pub use config::{AlgoKind, AlgoSpec, ConfigError, ExperimentConfig};
pub use diagnostics::{run_diagnostics, DiagnosticReport};
pub use experiment::{
    run_experiment, summarize, sweep_sk, ExperimentResult, RegretTrace, RunError, SummaryRow, SweepCell, TraceRow,
};
pub use report::{emit, emit_step_logs, emit_sweep, Format};
