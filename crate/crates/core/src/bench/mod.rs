//! Evaluation harness: pixel and embedding metrics, instruction-compliance
//! and background-consistency judges, and report tables.

mod judge;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use judge::{
    judge_ic_bc, normalize, outside_l1, Judge, JudgeVerdict, BC_L1_CEILING, PIXEL_TOLERANCE, SATISFIED_FRACTION,
};
pub use report::{aggregate_report, rank_marks, render_table, MetricMeans, Report};

use crate::datapipe::{derive_seed, generate_synthetic_corpus, DatapipeError, SyntheticSample};
use crate::editor::{euler_ancestral_sample, EditExample, EditorError, EditorModel};
use crate::encoders::{cosine, EdgeEmbedder, Embedder, PixelEmbedder};
use crate::image::Image;
use crate::instructions::{rasterize, union_mask, ComplexInstruction, InstructionError, Mask};
use crate::mllm::{MllmClient, MllmError};

/// Default benchmark size.
pub const BENCH_SIZE: usize = 400;
/// Default sampler steps.
pub const SAMPLER_STEPS: usize = 20;
/// Seed offset that keeps benchmark scenes apart from training corpora
/// built from the same base seed.
const BENCH_STREAM: u64 = 0xbe7c_4000;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("image resolution {found:?} does not match {expected:?}")]
    Resolution { expected: (usize, usize), found: (usize, usize) },
    #[error("{name} value {value} is out of range")]
    Range { name: &'static str, value: f64 },
    #[error("no records to aggregate")]
    Empty,
    #[error("judge reply lacks integer ic/bc grades: {0}")]
    JudgeReply(String),
    #[error(transparent)]
    Mllm(#[from] MllmError),
    #[error(transparent)]
    Editor(#[from] EditorError),
    #[error(transparent)]
    Instruction(#[from] InstructionError),
    #[error(transparent)]
    Datapipe(#[from] DatapipeError),
}

/// Mean absolute and root-mean-square pixel differences.
pub fn pixel_metrics(a: &Image, b: &Image) -> Result<(f64, f64), BenchError> {
    if a.resolution() != b.resolution() {
        return Err(BenchError::Resolution { expected: a.resolution(), found: b.resolution() });
    }
    let n = a.data().len() as f64;
    let (mut l1, mut sq) = (0.0, 0.0);
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = x - y;
        l1 += d.abs();
        sq += d * d;
    }
    Ok((l1 / n, (sq / n).sqrt()))
}

/// Metrics of one edited image against its reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// Similarity under the colour-sensitive embedder.
    pub clip_i: f64,
    /// Similarity under the structure-sensitive embedder.
    pub dino_i: f64,
    pub l1: f64,
    pub l2: f64,
    pub ic: f64,
    pub bc: f64,
}

/// Union of the instruction's box masks at the image resolution.
pub fn instruction_union(instruction: &ComplexInstruction, height: usize, width: usize) -> Result<Mask, BenchError> {
    let masks: Vec<Mask> = instruction.bboxes().iter().map(|b| rasterize(b, height, width)).collect();
    Ok(union_mask(&masks)?)
}

pub fn score_edit(
    src: &Image,
    edited: &Image,
    reference: &Image,
    instruction: &ComplexInstruction,
    judge: &Judge,
) -> Result<MetricRecord, BenchError> {
    let (l1, l2) = pixel_metrics(edited, reference)?;
    let (h, w) = src.resolution();
    let union = instruction_union(instruction, h, w)?;
    let verdict = judge_ic_bc(src, edited, instruction, &union, judge)?;
    let (ic, bc) = normalize(verdict.ic_raw(), verdict.bc_raw())?;
    let sim = |e: &dyn Embedder| cosine(&e.embed(edited), &e.embed(reference));
    Ok(MetricRecord { clip_i: sim(&PixelEmbedder), dino_i: sim(&EdgeEmbedder), l1, l2, ic, bc })
}

/// A synthetic benchmark with 1–4 edits per sample.
pub fn generate_benchmark(n: usize, seed: u64) -> Result<Vec<SyntheticSample>, BenchError> {
    Ok(generate_synthetic_corpus(n, 4, seed ^ BENCH_STREAM)?)
}

/// Which judge scores benchmark edits.
#[derive(Clone, Copy)]
pub enum JudgeKind<'a> {
    /// Needs the ground-truth target of every example.
    Procedural,
    Mllm(&'a MllmClient),
}

/// Edits every example source with `model` and scores it against the
/// example's target. Example `i` uses sampler seed `derive_seed(seed, i)`.
pub fn evaluate_examples(
    model: &EditorModel,
    examples: &[EditExample],
    n_steps: usize,
    seed: u64,
    kind: JudgeKind,
) -> Result<Vec<MetricRecord>, BenchError> {
    examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let subs = ex.instruction.subs();
            let edited = euler_ancestral_sample(model, &ex.src, subs, n_steps, derive_seed(seed, i as u64))?;
            let judge = match kind {
                JudgeKind::Procedural => Judge::Procedural { target: &ex.tgt },
                JudgeKind::Mllm(client) => Judge::Mllm(client),
            };
            score_edit(&ex.src, &edited, &ex.tgt, &ex.instruction, &judge)
        })
        .collect()
}

/// [`evaluate_examples`] on synthetic samples with the procedural judge.
pub fn evaluate_model(
    model: &EditorModel,
    samples: &[SyntheticSample],
    n_steps: usize,
    seed: u64,
) -> Result<Vec<MetricRecord>, BenchError> {
    let examples: Vec<EditExample> = samples.iter().map(EditExample::from).collect();
    evaluate_examples(model, &examples, n_steps, seed, JudgeKind::Procedural)
}
