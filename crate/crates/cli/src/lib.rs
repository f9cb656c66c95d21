//! Experiment harness around the geometry engine: configuration, model
//! families, runners and report output.

pub mod config;
pub mod family;
pub mod report;
pub mod runners;

pub use config::{
    parse_config, DiffeoFamilyConfig, EnsembleSource, ExperimentConfig, OutputFormat,
};
pub use report::{DistanceSample, ExperimentReport, Summary};
pub use runners::{
    run_cv_experiment, run_geodesic, run_invariance_experiment, run_karcher, run_oracle_experiment,
};
