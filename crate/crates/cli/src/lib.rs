//! Experiment pipelines behind the `stdgi` command-line tool.

pub mod commands;
pub mod config;
pub mod embfile;

pub use commands::{
    cmd_compare, cmd_embed, cmd_eval, cmd_pretrain, cmd_synth, cmd_train, exit_code, load_dataset, Dataset,
};
pub use config::ExperimentConfig;
