//! Experiment configuration, ε-sweeps against the FDTD oracle, error
//! reports and their export.

mod config;
mod export;
mod sweep;

pub use config::{
    CompareConfig, DataConfig, ExperimentConfig, FdtdConfig, RunPlan, SignalConfig, SourceConfig, SpectrumConfig,
    TimeConfig, ENV_PREFIX,
};
pub use export::{
    artifact_header, export_report, plot_script, read_report, read_report_csv, write_csv_artifact, write_text,
    ReportFiles,
};
pub use sweep::{
    compare, contrast_grid, fit_slope, forcing, modulation, reference_spectrum, route_gap, run_sweep, run_sweep_with, spectrum_of,
    ErrorReport, ErrorRow, SlopeFit, Slopes,
};
