//! Experiment orchestration: configuration, seeded runs, sweeps and persisted outputs.

pub mod config;
pub mod csv_io;
pub mod run;
pub mod sweep;
pub mod trace;

pub use config::{DataSource, DataSpec, HyperConfig, HyperMode, ProblemConfig, RunConfig};
pub use csv_io::{load_csv_dataset, read_csv_dataset, write_csv_dataset};
pub use run::{read_meta, run_experiment, RunMeta, RunOutcome, META_FILE, TIMING_FILE, TRACE_FILE};
pub use sweep::{apply_axis, report, summarize, sweep, SummaryRow, SweepAxis, SweepManifest, SweepSummary};
pub use trace::{record_metrics, CommCounters, RunTrace, TraceRow, TRACE_COLUMNS};
