//! Dataset construction: multi-turn expansion, conflict filtering, box
//! selection, score filtering, and a procedural scene corpus.

mod corpus;
mod filter;
mod manifest;
mod multiturn;
mod scene;
mod select;

use std::io;
use std::path::Path;

use thiserror::Error;

pub use corpus::{
    derive_seed, generate_corpus_between, generate_multiturn_record, generate_synthetic_corpus, lineage_conflict,
    region_name, training_corpora, SyntheticRecord, SyntheticSample, GRID,
};
pub use filter::{postprocess_filter, QualityScores};
pub use manifest::{
    load_examples, read_manifest, write_manifest, write_synthetic_corpus, ManifestEntry, MANIFEST_FILE,
};
pub use multiturn::{
    detect_conflicts, expand_multiturn, noun_tokens, ComplexEditSample, ConflictJudge, ConflictVerdict,
    MultiTurnRecord, Provenance, CONFLICT_IOU,
};
pub use scene::{Background, Color, Scene, SceneObject, Shape, MAX_OBJECTS};
pub use select::{outside_similarity, select_bbox, TIE_TOLERANCE};

use crate::image::ImageError;
use crate::instructions::InstructionError;
use crate::mllm::MllmError;

#[derive(Debug, Error)]
pub enum DatapipeError {
    #[error("a multi-turn record needs at least two turns, got {0}")]
    NotEnoughTurns(usize),
    #[error("record has {images} images for {turns} turns; expected turns + 1")]
    ImageCount { images: usize, turns: usize },
    #[error("no candidate boxes")]
    NoCandidates,
    #[error("source {src:?} and target {tgt:?} resolutions differ")]
    Resolution { src: (usize, usize), tgt: (usize, usize) },
    #[error("{name} score {value} is outside 1..=5")]
    ScoreRange { name: &'static str, value: u8 },
    #[error("sample from {0} has no quality scores")]
    Unscored(String),
    #[error("could not place the requested edits after {retries} scenes")]
    CanvasFull { retries: usize },
    #[error("conflict judge reply lacks conflict/rationale: {0}")]
    JudgeReply(String),
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Instruction(#[from] InstructionError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Mllm(#[from] MllmError),
}

impl DatapipeError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        DatapipeError::Io { path: path.display().to_string(), source }
    }
}
