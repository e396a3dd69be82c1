//! Experiment harness: config loading, drivers and result output.

mod config;
mod record;
mod run;

pub use config::{
    AttentionConfig, BenchConfig, ClassifyConfig, DenoiserConfig, DenoiserKind, ExperimentConfig, ExperimentKind,
    GridConfig, GridSource, OperatorKind, OutputFormat, Overrides, ScheduleConfig, SpectralConfig, SweepConfig,
    TemplateKind,
};
pub use record::{
    emit_results, read_json, write_csv, write_json, write_results, ResultRecord, METRIC_COLUMNS, RECORD_SCHEMA,
};
pub use run::run_experiment;
