//! Experiment configuration, execution and reporting.

pub mod config;
pub mod experiment;
pub mod report;

pub use config::{BaselineConfig, DatasetConfig, DecayConfig, Mode, RunConfig};
pub use experiment::{execute, run_experiment, run_fold, write_report};
pub use report::{format_fixed, report_table, ReportTable, RunReport, RunRow};
