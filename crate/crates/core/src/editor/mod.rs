//! The diffusion editing model: a small transformer denoiser whose
//! cross-attention fuses the foreground (per-instruction) and background
//! (source-image) pathways, its training loop and its sampler.

mod model;
mod sample;
mod schedule;
mod train;

use thiserror::Error;

pub use model::{
    fuse, AttentionTrace, Conditioning, CrossInputs, DenoiserBlock, EditorConfig, EditorModel, EditorNet, Variant,
};
pub use sample::{euler_ancestral, euler_ancestral_sample, SampleOutput, StepRecord};
pub use schedule::{ancestral_step, DiffusionSchedule};
pub use train::{
    example_loss, noise_latent, train_two_phase, training_step, EditExample, Phase, TrainConfig, TrainReport,
};

use crate::encoders::EncoderError;
use crate::image::ImageError;
use crate::instructions::InstructionError;
use crate::numkernel::TensorError;

#[derive(Debug, Error)]
pub enum EditorError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Instruction(#[from] InstructionError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("fusion weight {0} is outside [0, 1]")]
    Lambda(f64),
    #[error("image resolution {found:?} does not match the model grid {expected:?}")]
    Resolution { expected: (usize, usize), found: (usize, usize) },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("non-finite noise prediction at sampler step {step}")]
    NonFiniteSample { step: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("model configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl EditorError {
    /// Whether the failure is numeric rather than about inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            EditorError::NonFiniteLoss { .. }
                | EditorError::NonFiniteSample { .. }
                | EditorError::Tensor(TensorError::NonFinite(_))
        )
    }
}
