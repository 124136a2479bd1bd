//! Configuration, checkpoints, reports and the command implementations.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod report;

pub use checkpoint::Checkpoint;
pub use commands::{
    cmd_eval, cmd_gen_synthetic, cmd_predict, cmd_preprocess, cmd_train, Manifest, PastInput,
};
pub use config::RunConfig;
pub use report::{MetricsRow, RunReport};
