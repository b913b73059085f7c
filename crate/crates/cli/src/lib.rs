//! Experiment driver: declarative parameter sweeps over continuation runs,
//! per-cell traces, and cost summaries.

pub mod check;
pub mod config;
pub mod error;
pub mod presets;
pub mod runner;
pub mod summary;

pub use config::{Cell, ExperimentConfig, ModelSpec, Sweep};
pub use error::{CliError, Result};
pub use runner::{run_experiment, threads_from_env, RunReport, TraceFile};
pub use summary::{emit_summary, SummaryFiles};
