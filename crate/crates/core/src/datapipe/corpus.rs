//! Procedural ground-truth corpora: random scenes edited by templated
//! ADD / REMOVE / CHANGE operations.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::instructions::{BBox, ComplexInstruction, OpType, SubInstruction};

use super::{Background, Color, DatapipeError, MultiTurnRecord, Scene, SceneObject, Shape, MAX_OBJECTS};

/// Canvas side of generated scenes, in pixels.
pub const GRID: usize = 16;
const MIN_SIDE: usize = 4;
const MAX_SIDE: usize = 6;
const MAX_INITIAL_OBJECTS: usize = 4;
const PLACEMENT_TRIES: usize = 200;
const SCENE_RETRIES: usize = 50;

/// One synthetic sample: source and target scenes and the instruction that
/// maps one to the other.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSample {
    pub id: usize,
    pub src: Scene,
    pub tgt: Scene,
    pub instruction: ComplexInstruction,
}

/// Mixes a base seed with an index so every sample has its own stream.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Name of the thirds-grid cell containing `(x, y)`.
pub fn region_name(x: f64, y: f64) -> &'static str {
    const NAMES: [[&str; 3]; 3] =
        [["top left", "top", "top right"], ["left", "center", "right"], ["bottom left", "bottom", "bottom right"]];
    let col = ((x * 3.0).floor() as usize).min(2);
    let row = ((y * 3.0).floor() as usize).min(2);
    NAMES[row][col]
}

fn pixel_box(c0: usize, r0: usize, w: usize, h: usize) -> BBox {
    let g = GRID as f64;
    BBox::new(c0 as f64 / g, r0 as f64 / g, (c0 + w) as f64 / g, (r0 + h) as f64 / g).expect("pixel box inside canvas")
}

/// Box grown by one pixel on every side, so placed objects keep a gap.
fn padded(b: &BBox) -> BBox {
    let p = 1.0 / GRID as f64;
    BBox::new((b.x0() - p).max(0.0), (b.y0() - p).max(0.0), (b.x1() + p).min(1.0), (b.y1() + p).min(1.0))
        .expect("padding keeps the box valid")
}

fn random_free_box<R: Rng + ?Sized>(rng: &mut R, taken: &[BBox]) -> Option<BBox> {
    for _ in 0..PLACEMENT_TRIES {
        let w = rng.random_range(MIN_SIDE..=MAX_SIDE);
        let h = rng.random_range(MIN_SIDE..=MAX_SIDE);
        let c0 = rng.random_range(0..=GRID - w);
        let r0 = rng.random_range(0..=GRID - h);
        let b = pixel_box(c0, r0, w, h);
        let grown = padded(&b);
        if taken.iter().all(|t| !t.overlaps(&grown)) {
            return Some(b);
        }
    }
    None
}

/// A scene whose objects carry stable identities across edits.
#[derive(Clone, Debug)]
struct Tracked {
    scene: Scene,
    ids: Vec<usize>,
    next_id: usize,
    /// Every box that has held an object, so additions never reuse a spot.
    history: Vec<BBox>,
}

impl Tracked {
    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let background = *Background::ALL.choose(rng).expect("non-empty");
        let mut t =
            Tracked { scene: Scene::new(GRID, GRID, background), ids: Vec::new(), next_id: 0, history: Vec::new() };
        let n = rng.random_range(1..=MAX_INITIAL_OBJECTS);
        for _ in 0..n {
            let Some(bbox) = random_free_box(rng, &t.history) else { break };
            let Some((shape, color)) = t.fresh_identity(rng, None) else { break };
            t.push(SceneObject { shape, color, bbox });
        }
        t
    }

    fn push(&mut self, obj: SceneObject) {
        self.history.push(obj.bbox);
        self.scene.objects.push(obj);
        self.ids.push(self.next_id);
        self.next_id += 1;
    }

    /// A (shape, colour) pair not yet present, so descriptions stay unique.
    fn fresh_identity<R: Rng + ?Sized>(&self, rng: &mut R, shape: Option<Shape>) -> Option<(Shape, Color)> {
        let mut options = Vec::new();
        for s in Shape::ALL {
            if shape.is_some_and(|want| want != s) {
                continue;
            }
            for c in Color::ALL {
                if self.scene.find(Some(s), Some(c)).next().is_none() {
                    options.push((s, c));
                }
            }
        }
        options.choose(rng).copied()
    }
}

/// One applied edit: the sub-instruction and the identity of the object it
/// touched.
struct Applied {
    sub: SubInstruction,
    object: usize,
}

/// Applies one random feasible edit to `state`. Objects in `frozen` are
/// not edited again.
fn apply_random_edit<R: Rng + ?Sized>(state: &mut Tracked, rng: &mut R, frozen: &[usize]) -> Option<Applied> {
    let editable: Vec<usize> = (0..state.scene.objects.len()).filter(|&i| !frozen.contains(&state.ids[i])).collect();
    let add_box = if state.scene.objects.len() < MAX_OBJECTS { random_free_box(rng, &state.history) } else { None };
    let mut ops = Vec::new();
    if add_box.is_some() {
        ops.push(OpType::Add);
    }
    if !editable.is_empty() {
        ops.push(OpType::Remove);
        ops.push(OpType::Change);
    }
    let op = *ops.choose(rng)?;
    match op {
        OpType::Add => {
            let bbox = add_box.expect("checked above");
            let (shape, color) = state.fresh_identity(rng, None)?;
            let (cx, cy) = bbox.center();
            let text = format!("add a {color} {shape} at the {}", region_name(cx, cy));
            state.push(SceneObject { shape, color, bbox });
            let object = *state.ids.last().expect("just pushed");
            Some(Applied { sub: SubInstruction { text, op, bbox, index: 0 }, object })
        }
        OpType::Remove => {
            let i = *editable.choose(rng).expect("non-empty");
            let obj = state.scene.objects.remove(i);
            let object = state.ids.remove(i);
            let text = format!("remove the {}", obj.describe());
            Some(Applied { sub: SubInstruction { text, op, bbox: obj.bbox, index: 0 }, object })
        }
        OpType::Change => {
            let i = *editable.choose(rng).expect("non-empty");
            let old = state.scene.objects[i].clone();
            let (_, color) = state.fresh_identity(rng, Some(old.shape))?;
            let text = if rng.random_bool(0.5) {
                format!("change the {} to {color}", old.describe())
            } else {
                format!("make the {} {color}", old.describe())
            };
            state.scene.objects[i].color = color;
            Some(Applied { sub: SubInstruction { text, op, bbox: old.bbox, index: 0 }, object: state.ids[i] })
        }
    }
}

const JOINERS: [&str; 3] = ["; ", " and ", ", then "];

fn join_clauses<R: Rng + ?Sized>(rng: &mut R, clauses: &[String]) -> String {
    let mut out = clauses[0].clone();
    for c in &clauses[1..] {
        out.push_str(JOINERS.choose(rng).expect("non-empty"));
        out.push_str(c);
    }
    out
}

fn synthetic_sample(id: usize, min_subs: usize, max_subs: usize, seed: u64) -> Result<SyntheticSample, DatapipeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, id as u64));
    for _ in 0..SCENE_RETRIES {
        let mut state = Tracked::random(&mut rng);
        let src = state.scene.clone();
        let k = rng.random_range(min_subs..=max_subs);
        let mut subs = Vec::with_capacity(k);
        let mut touched = Vec::with_capacity(k);
        while subs.len() < k {
            match apply_random_edit(&mut state, &mut rng, &touched) {
                Some(a) => {
                    touched.push(a.object);
                    subs.push(a.sub);
                }
                None => break,
            }
        }
        if subs.len() < k {
            continue;
        }
        let texts: Vec<String> = subs.iter().map(|s| s.text.clone()).collect();
        let raw = join_clauses(&mut rng, &texts);
        let instruction = ComplexInstruction::new(raw, subs)?;
        return Ok(SyntheticSample { id, src, tgt: state.scene, instruction });
    }
    Err(DatapipeError::CanvasFull { retries: SCENE_RETRIES })
}

/// `n_samples` independent samples with `1..=max_subs` edits each; every
/// object is edited at most once, so edits never conflict and the boxes
/// of one sample are pairwise disjoint.
pub fn generate_synthetic_corpus(
    n_samples: usize,
    max_subs: usize,
    seed: u64,
) -> Result<Vec<SyntheticSample>, DatapipeError> {
    generate_corpus_between(n_samples, 1, max_subs, seed)
}

/// Like [`generate_synthetic_corpus`] with at least `min_subs` edits per
/// sample.
pub fn generate_corpus_between(
    n_samples: usize,
    min_subs: usize,
    max_subs: usize,
    seed: u64,
) -> Result<Vec<SyntheticSample>, DatapipeError> {
    if !(1..=4).contains(&max_subs) || !(1..=max_subs).contains(&min_subs) {
        return Err(DatapipeError::Config(format!(
            "edit counts must satisfy 1 <= min_subs <= max_subs <= 4, got {min_subs}..={max_subs}"
        )));
    }
    (0..n_samples).map(|i| synthetic_sample(i, min_subs, max_subs, seed)).collect()
}

/// Training corpora of `n` samples in total: half single-edit samples for
/// phase 1 and half with two to four edits for phase 2.
pub fn training_corpora(n: usize, seed: u64) -> Result<(Vec<SyntheticSample>, Vec<SyntheticSample>), DatapipeError> {
    let simple = generate_corpus_between(n / 2, 1, 1, seed)?;
    let complex = generate_corpus_between(n - n / 2, 2, 4, derive_seed(seed, u64::MAX))?;
    Ok((simple, complex))
}

/// A multi-turn editing session over a synthetic scene.
#[derive(Clone, Debug)]
pub struct SyntheticRecord {
    pub record: MultiTurnRecord,
    /// `n + 1` scenes: the original, then the state after every turn.
    pub scenes: Vec<Scene>,
    /// Identity of the object each turn edits.
    pub lineage: Vec<usize>,
}

/// An `n_turns` session. With probability `reedit_rate` a turn may touch an
/// object that an earlier turn already edited, which makes some windows
/// conflicting.
pub fn generate_multiturn_record(
    id: usize,
    n_turns: usize,
    reedit_rate: f64,
    seed: u64,
) -> Result<SyntheticRecord, DatapipeError> {
    if n_turns < 2 {
        return Err(DatapipeError::NotEnoughTurns(n_turns));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, id as u64));
    for _ in 0..SCENE_RETRIES {
        let mut state = Tracked::random(&mut rng);
        let mut scenes = vec![state.scene.clone()];
        let mut turns = Vec::with_capacity(n_turns);
        let mut lineage = Vec::with_capacity(n_turns);
        while turns.len() < n_turns {
            let frozen: Vec<usize> = if rng.random_bool(reedit_rate) { Vec::new() } else { lineage.clone() };
            let Some(a) = apply_random_edit(&mut state, &mut rng, &frozen) else { break };
            lineage.push(a.object);
            turns.push(a.sub);
            scenes.push(state.scene.clone());
        }
        if turns.len() < n_turns {
            continue;
        }
        let images = (0..=n_turns).map(|k| format!("rec{id:05}_{k}.ppm")).collect();
        let record = MultiTurnRecord { id: format!("rec{id:05}"), images, turns };
        return Ok(SyntheticRecord { record, scenes, lineage });
    }
    Err(DatapipeError::CanvasFull { retries: SCENE_RETRIES })
}

/// Whether the object lineage shows one object edited twice within the
/// window `[start, start + len)`.
pub fn lineage_conflict(lineage: &[usize], start: usize, len: usize) -> bool {
    let w = &lineage[start..start + len];
    (0..w.len()).any(|i| w[i + 1..].contains(&w[i]))
}
