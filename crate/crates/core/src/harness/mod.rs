//! Experiment harness: configuration, multi-seed runs, CSV telemetry,
//! summaries and policy checkpoints.

mod checkpoint;
pub mod config;
mod experiment;

pub use checkpoint::{checkpoint, restore};
pub use config::{parse_assignments, ConfigKey, ExperimentConfig, CONFIG_KEYS};
pub use experiment::{
    area_under_curve, efficiency, median, records_to_csv, run_experiment, run_file_stem,
    summarize, AlgorithmSummary, EfficiencyReport, ExperimentSummary, CSV_HEADER,
    EFFICIENCY_TARGET,
};
