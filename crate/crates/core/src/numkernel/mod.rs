//! Dense `f64` tensors with reverse-mode gradients.
//!
//! Non-finite results are reported as [`TensorError::NonFinite`] in builds
//! with debug assertions (including tests); release builds propagate them.

mod checkpoint;
pub mod gradcheck;
pub mod nn;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{Checkpoint, ParamRecord, CHECKPOINT_VERSION};
pub use gradcheck::{finite_diff_check, numeric_gradients, relative_error};
pub use optim::Adam;
pub use params::{Param, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("expected rank {expected}, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("rows have different lengths")]
    Ragged,
    #[error("{0}: no inputs")]
    Empty(&'static str),
    #[error("row slice {start}..{} out of range for {rows} rows", start + len)]
    SliceOutOfRange { start: usize, len: usize, rows: usize },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("parameter {0:?} registered twice")]
    DuplicateParam(String),
    #[error("parameter {0:?} missing")]
    MissingParam(String),
    #[error("expected {expected} parameters, found {found}")]
    ParamCount { expected: usize, found: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    InvalidArgument(String),
}
