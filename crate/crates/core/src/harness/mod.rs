//! Experiment orchestration: configuration files, the synthetic session
//! generator, ablation and λ-sweep runs, and comparison tables.

mod config;
mod experiment;
mod render;
pub mod synth;

pub use config::{DatasetSection, ExperimentConfig, MmrSection, ModelSection, SweepSection, Variant};
pub use experiment::{
    experiment_dataset, run_experiment, spearman, sweep, sweep_point_name, ArmResult, ArmSummary,
    ExperimentOutcome, SweepOutcome, SweepSummary,
};
pub use render::{compare, render_report, Comparison};
pub use synth::{generate_records, generate_synthetic, SyntheticSpec};
