//! Experiment orchestration: configuration, the run loop, aggregation and file output.

pub mod aggregate;
pub mod config;
pub mod output;
pub mod run;

pub use aggregate::{aggregate, format_pm, load_runs, write_summary, MethodSummary, SummaryTable};
pub use config::{Environment, ExperimentConfig, Method};
pub use output::{emit_fields, fields_csv, trace_csv, write_fields, write_run, RunMeta, FIELD_HEADER};
pub use run::{build_bank, build_world, run_episode, run_episode_in, Checkpoint, FitStats, RunTrace, TraceRow, WorldInstance};
