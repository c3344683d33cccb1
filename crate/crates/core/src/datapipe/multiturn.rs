use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::instructions::{ComplexInstruction, SubInstruction};
use crate::mllm::{MllmClient, CONFLICT};

use super::{Color, DatapipeError, QualityScores};

/// A multi-turn editing session: the original image, one result per turn,
/// and the turn instructions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiTurnRecord {
    pub id: String,
    pub images: Vec<String>,
    pub turns: Vec<SubInstruction>,
}

impl MultiTurnRecord {
    pub fn validate(&self) -> Result<(), DatapipeError> {
        if self.turns.len() < 2 {
            return Err(DatapipeError::NotEnoughTurns(self.turns.len()));
        }
        if self.images.len() != self.turns.len() + 1 {
            return Err(DatapipeError::ImageCount { images: self.images.len(), turns: self.turns.len() });
        }
        Ok(())
    }
}

/// Where a sample came from: a window of turns inside a record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub record: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexEditSample {
    pub src: String,
    pub tgt: String,
    pub instruction: ComplexInstruction,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<QualityScores>,
}

/// Every contiguous window of at least two turns, shortest first.
///
/// A record with `n` turns yields `n(n−1)/2` samples, `n−L+1` of length `L`.
pub fn expand_multiturn(record: &MultiTurnRecord) -> Result<Vec<ComplexEditSample>, DatapipeError> {
    record.validate()?;
    let n = record.turns.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for len in 2..=n {
        for start in 0..=n - len {
            let turns = &record.turns[start..start + len];
            let raw = turns.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join("; ");
            let instruction = ComplexInstruction::with_limit(raw, turns.to_vec(), n)?;
            out.push(ComplexEditSample {
                src: record.images[start].clone(),
                tgt: record.images[start + len].clone(),
                instruction,
                provenance: Provenance { record: record.id.clone(), start, len },
                scores: None,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictVerdict {
    pub conflict: bool,
    pub rationale: String,
}

pub enum ConflictJudge<'a> {
    /// Box-overlap plus shared-noun heuristic.
    Stub,
    /// Multimodal model shown the window's source and target images.
    Mllm { client: &'a MllmClient, src: &'a Image, tgt: &'a Image },
}

/// Minimum IoU for two edits to count as touching the same object.
pub const CONFLICT_IOU: f64 = 0.3;

const NON_NOUNS: &[&str] = &[
    "a", "an", "the", "this", "that", "its", "it", "and", "then", "also", "of", "on", "in", "at", "to", "into", "onto",
    "with", "near", "by", "from", "for", "as", "add", "put", "place", "insert", "draw", "remove", "delete", "erase",
    "take", "away", "out", "change", "make", "turn", "replace", "recolor", "recolour", "paint", "color", "colour",
    "top", "bottom", "left", "right", "center", "centre", "middle", "upper", "lower", "corner", "side", "one", "two",
    "three", "four", "five", "six", "seven", "eight", "nine", "new", "small", "big", "large",
];

/// Content words of an instruction: lowercase tokens that are not function
/// words, verbs, colours, positions or numbers.
pub fn noun_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .filter(|w| {
            !w.is_empty()
                && !NON_NOUNS.contains(&w.as_str())
                && Color::from_word(w).is_none()
                && !w.chars().all(|c| c.is_ascii_digit())
        })
        .collect()
}

fn stub_verdict(subs: &[SubInstruction]) -> ConflictVerdict {
    for i in 0..subs.len() {
        for j in i + 1..subs.len() {
            let iou = subs[i].bbox.iou(&subs[j].bbox);
            if iou <= CONFLICT_IOU {
                continue;
            }
            let shared: Vec<String> =
                noun_tokens(&subs[i].text).intersection(&noun_tokens(&subs[j].text)).cloned().collect();
            if !shared.is_empty() {
                return ConflictVerdict {
                    conflict: true,
                    rationale: format!(
                        "edits {} and {} overlap (IoU {iou:.2}) and both mention {}",
                        i + 1,
                        j + 1,
                        shared.join(", ")
                    ),
                };
            }
        }
    }
    ConflictVerdict { conflict: false, rationale: "no pair of edits targets the same object".into() }
}

pub fn detect_conflicts(sample: &ComplexEditSample, judge: &ConflictJudge) -> Result<ConflictVerdict, DatapipeError> {
    let subs = sample.instruction.subs();
    match judge {
        ConflictJudge::Stub => Ok(stub_verdict(subs)),
        ConflictJudge::Mllm { client, src, tgt } => {
            let listing: Vec<String> = subs.iter().enumerate().map(|(i, s)| format!("{}. {}", i + 1, s.text)).collect();
            let reply = client.call(&CONFLICT, &format!("Edits: {}", listing.join(" ")), &[src, tgt])?;
            let value = reply.json()?;
            let conflict = value.get("conflict").and_then(|v| v.as_bool());
            let rationale = value.get("rationale").and_then(|v| v.as_str());
            match (conflict, rationale) {
                (Some(conflict), Some(r)) => Ok(ConflictVerdict { conflict, rationale: r.to_string() }),
                _ => Err(DatapipeError::JudgeReply(reply.content)),
            }
        }
    }
}
