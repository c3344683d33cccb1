//! Complex instructions, their decomposition into boxed sub-instructions,
//! and box rasterization.

mod lexicon;
mod mask;
mod mllm;
mod rules;
mod types;

use thiserror::Error;

pub use lexicon::Lexicon;
pub use mask::{rasterize, union_mask, Mask};
pub use mllm::{decompose_mllm, parse_decomposition};
pub use rules::{decompose_rules, decompose_with, default_box};
pub use types::{BBox, ComplexInstruction, OpType, SubInstruction, MAX_SUBS};

use crate::mllm::MllmError;

#[derive(Debug, Error)]
pub enum InstructionError {
    #[error("unknown operation {0:?}")]
    UnknownOp(String),
    #[error("invalid bounding box {0:?}")]
    InvalidBBox([f64; 4]),
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("decomposition has no sub-instructions")]
    NoSubInstructions,
    #[error("{count} sub-instructions exceed the limit of {max}")]
    TooManySubs { count: usize, max: usize },
    #[error("sub-instruction {0} has empty text")]
    EmptyText(usize),
    #[error("no known verb in clause {0:?}")]
    UnknownVerb(String),
    #[error("quantity {quantity} is not supported in clause {clause:?}")]
    UnsupportedQuantity { quantity: usize, clause: String },
    #[error("decomposition schema: {0}")]
    Schema(String),
    #[error("mask resolution {found:?} does not match {expected:?}")]
    ResolutionMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("lexicon: {0}")]
    Lexicon(String),
    #[error("model response rejected: {reason}; raw response: {raw}")]
    Response { reason: String, raw: String },
    #[error(transparent)]
    Mllm(#[from] MllmError),
}
