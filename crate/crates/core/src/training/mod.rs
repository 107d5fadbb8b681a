//! Semi-supervised adversarial training: configuration, optimiser, data
//! pipeline, update steps, checkpoints and the epoch loop.

mod adam;
mod checkpoint;
mod config;
mod data;
mod step;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{lr_schedule, TrainConfig};
pub use data::{
    cut_patch, patch_weights, read_corpus, sample_batch, sample_seed, synthesize_corpus,
    synthesize_sample, write_corpus, Batch, Patch, SyntheticSample, HR_SUFFIX, REAL_SUFFIX,
    SYNTH_SUFFIX, VESSEL_SUFFIX,
};
pub use step::{
    discriminator_update, sasr_step, train_discriminator_step, train_generator_step, StepLosses,
};
pub use trainer::{train_loop, write_log, LogRow, Trainer, LOG_HEADER};
