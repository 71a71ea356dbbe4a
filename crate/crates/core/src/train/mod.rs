//! L1 training with Adam and per-step cosine annealing, binary checkpoints
//! with bit-exact resume, and tiled restoration of whole images.

mod checkpoint;
mod config;
mod data;
mod optim;
mod restore;
mod run;

use std::path::PathBuf;

use thiserror::Error;

use crate::model::ModelError;
use crate::synth::SynthError;
use crate::tensor::TensorError;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Precision, TrainConfig};
pub use data::{image_to_input, PairSet, MIN_PATCH};
pub use optim::{adam_step, adam_step_filtered, cosine_lr, AdamState, ScheduleConfig, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use restore::{restore_image, restore_images, RestoreOptions, RestoreSummary};
pub use run::{evaluate_model, train, train_with, EvalSummary, LossRow, TrainOutcome};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Data(String),

    #[error("no gradient for parameter `{0}`")]
    MissingGrad(String),

    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },

    #[error("non-finite loss at step {step}; diagnostic checkpoint written to {checkpoint}")]
    Diverged { step: u64, checkpoint: PathBuf },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Synth(#[from] SynthError),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> TrainError {
    let path = path.into();
    move |source| TrainError::Io { path, source }
}
