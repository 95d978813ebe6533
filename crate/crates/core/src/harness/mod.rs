//! Experiment driver: configuration, the on-disk dataset, and the commands
//! behind the command-line tool.

pub mod commands;
pub mod config;
pub mod dataset;

pub use commands::{
    evaluate, gen_data, load_model, sweep_dw, sweep_uncertainty, train_models, validate, DwPoint, EvalSummary,
    GenDataSummary, Paths, PolicySummary, TrainSummary, UncertaintyPoint, ValidationReport,
};
pub use config::{derive_seed, ExperimentConfig};
pub use dataset::{Dataset, Record, Split};
