//! Configuration-driven convergence sweeps, metrics, slope fits and CSV records.

pub mod config;
pub mod fit;
pub mod records;
pub mod run;

pub use config::{BoundaryMode, ExperimentConfig, Method, Problem};
pub use fit::{fit_slope, fit_slope_plain, median_by_n, summarize, Metric, SlopeFit};
pub use records::{emit_csv, read_csv, RecordWriter, RunRecord};
pub use run::{exact_fields, forward_error, inverse_error, prepare_cell, run_cell, run_experiment, run_experiment_with};
