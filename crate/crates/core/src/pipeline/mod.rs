//! Two-stage training, window sampling, free-running generation and
//! checkpoint encoding.

mod checkpoint;
mod config;
mod generate;
mod train;
mod window;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::TrainConfig;
pub use generate::{generate, generate_many, GenerateOptions, InitMode};
pub use train::{
    freeze_and_prune, train, train_phase1, train_phase2, EpochRecord, Phase, PruneReport, TrainOutcome, TrainRngs,
};
pub use window::{admissible_windows, sample_windows};
