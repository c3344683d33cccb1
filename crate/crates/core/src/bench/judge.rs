use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::instructions::{rasterize, ComplexInstruction, Mask};
use crate::mllm::{MllmClient, JUDGE};

use super::BenchError;

/// Per-channel distance under which an edited pixel matches the expected one.
pub const PIXEL_TOLERANCE: f64 = 0.15;
/// Share of a sub-edit's changed pixels that must match for it to count.
pub const SATISFIED_FRACTION: f64 = 0.6;
/// Mean outside-mask L1 at which background consistency bottoms out.
pub const BC_L1_CEILING: f64 = 0.1;

/// Raw judge grades: compliance on 1–10, background consistency on 1–5.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    ic_raw: u8,
    bc_raw: u8,
    pub rationale: String,
}

impl JudgeVerdict {
    pub fn new(ic_raw: u8, bc_raw: u8, rationale: impl Into<String>) -> Result<Self, BenchError> {
        if !(1..=10).contains(&ic_raw) {
            return Err(BenchError::Range { name: "ic", value: f64::from(ic_raw) });
        }
        if !(1..=5).contains(&bc_raw) {
            return Err(BenchError::Range { name: "bc", value: f64::from(bc_raw) });
        }
        Ok(Self { ic_raw, bc_raw, rationale: rationale.into() })
    }

    pub fn ic_raw(&self) -> u8 {
        self.ic_raw
    }

    pub fn bc_raw(&self) -> u8 {
        self.bc_raw
    }
}

/// Min-max normalization of raw grades to `[0, 1]`.
pub fn normalize(ic_raw: u8, bc_raw: u8) -> Result<(f64, f64), BenchError> {
    let v = JudgeVerdict::new(ic_raw, bc_raw, "")?;
    Ok(((f64::from(v.ic_raw) - 1.0) / 9.0, (f64::from(v.bc_raw) - 1.0) / 4.0))
}

pub enum Judge<'a> {
    /// Compares against the known ground-truth target; synthetic scenes only.
    Procedural {
        target: &'a Image,
    },
    Mllm(&'a MllmClient),
}

fn close(a: [f64; 3], b: [f64; 3]) -> bool {
    a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= PIXEL_TOLERANCE)
}

/// Whether one sub-edit was carried out: inside its box, enough of the
/// pixels the target changes must match the target.
fn sub_satisfied(src: &Image, edited: &Image, target: &Image, mask: &Mask) -> bool {
    let (h, w) = src.resolution();
    let (mut changed, mut matched) = (0usize, 0usize);
    let (mut cells, mut cells_matched) = (0usize, 0usize);
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let ok = close(edited.pixel(r, c), target.pixel(r, c));
            cells += 1;
            cells_matched += usize::from(ok);
            if src.pixel(r, c) != target.pixel(r, c) {
                changed += 1;
                matched += usize::from(ok);
            }
        }
    }
    if changed == 0 {
        // nothing visible to do; the box must simply stay as expected
        return cells == 0 || cells_matched as f64 >= SATISFIED_FRACTION * cells as f64;
    }
    matched as f64 >= SATISFIED_FRACTION * changed as f64
}

/// Mean absolute difference between `a` and `b` over pixels outside `mask`.
pub fn outside_l1(a: &Image, b: &Image, mask: &Mask) -> f64 {
    let (h, w) = a.resolution();
    let (mut sum, mut n) = (0.0, 0usize);
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) {
                continue;
            }
            let (p, q) = (a.pixel(r, c), b.pixel(r, c));
            sum += p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>();
            n += 3;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn judge_ic_bc(
    src: &Image,
    edited: &Image,
    instruction: &ComplexInstruction,
    union: &Mask,
    judge: &Judge,
) -> Result<JudgeVerdict, BenchError> {
    let (h, w) = src.resolution();
    if edited.resolution() != (h, w) || union.resolution() != (h, w) {
        return Err(BenchError::Resolution { expected: (h, w), found: edited.resolution() });
    }
    match judge {
        Judge::Procedural { target } => {
            if target.resolution() != (h, w) {
                return Err(BenchError::Resolution { expected: (h, w), found: target.resolution() });
            }
            let satisfied: Vec<bool> = instruction
                .subs()
                .iter()
                .map(|s| sub_satisfied(src, edited, target, &rasterize(&s.bbox, h, w)))
                .collect();
            let k = satisfied.iter().filter(|&&s| s).count();
            let frac = k as f64 / satisfied.len() as f64;
            let l1 = outside_l1(src, edited, union);
            let ic = (1.0 + 9.0 * frac).round() as u8;
            let bc = (1.0 + 4.0 * (1.0 - (l1 / BC_L1_CEILING).min(1.0))).round() as u8;
            JudgeVerdict::new(ic, bc, format!("{k}/{} edits satisfied; background L1 {l1:.4}", satisfied.len()))
        }
        Judge::Mllm(client) => {
            let reply = client.call(&JUDGE, &format!("Request: {}", instruction.raw_text), &[src, edited])?;
            let value = reply.json()?;
            let grade = |key: &str| value.get(key).and_then(|v| v.as_u64());
            match (grade("ic"), grade("bc")) {
                (Some(ic), Some(bc)) => {
                    let rationale = value.get("rationale").and_then(|v| v.as_str()).unwrap_or_default();
                    let ic = u8::try_from(ic).map_err(|_| BenchError::Range { name: "ic", value: ic as f64 })?;
                    let bc = u8::try_from(bc).map_err(|_| BenchError::Range { name: "bc", value: bc as f64 })?;
                    JudgeVerdict::new(ic, bc, rationale)
                }
                _ => Err(BenchError::JudgeReply(reply.content)),
            }
        }
    }
}
