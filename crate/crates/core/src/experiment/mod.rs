//! Monte Carlo harness: simulate the benchmark, run the selected algorithms
//! on identical data, and report RMSEs and per-block computation times.

mod config;
mod metrics;
mod runner;

pub use config::{Algorithm, ExperimentConfig, SweepAxis};
pub use metrics::{paired_improvement, rmse_metrics, summarize, Interval, RunErrors};
pub use runner::{
    run_experiment, run_single, sweep, write_report_csv, AlgorithmReport, AlgorithmRun, RunReport,
    SweepPoint, REPORT_HEADER,
};
