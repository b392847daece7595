//! Low-rank adapters on frozen weights, trained on toy next-token models.

mod adapter;
mod loss;
mod matrix;
mod model;
mod schedule;
mod train;

pub use adapter::{lora_apply, AdapterSet, LoraAdapter, INIT_STD};
pub use loss::{cross_entropy_loss, log_softmax};
pub use matrix::DenseMatrix;
pub use model::{analytic_gradients, bernoulli_keep, positions, DropoutMask, LoraGradients, ModelDims, ToyLm};
pub use schedule::{cosine_lr, LrSchedule};
pub use train::{
    early_stop_epoch, steps_per_epoch, train, train_toy, AdapterSpec, EarlyStopping, EpochRecord, PresetSpec,
    StepRecord, StopReason, TokenDataset, TrainConfig, TrainPreset, TrainTrace, MIN_DELTA,
};

#[derive(Debug, thiserror::Error)]
pub enum LoraError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("target {target} out of range for vocabulary of {vocab}")]
    Index { target: usize, vocab: usize },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("non-finite loss at epoch {epoch}")]
    Divergence { epoch: usize, trace: Box<TrainTrace> },
}

pub type Result<T> = std::result::Result<T, LoraError>;
