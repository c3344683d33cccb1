use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::instructions::ComplexInstruction;
use crate::numkernel::{Adam, Checkpoint, Tape, Tensor};

use super::{EditorError, EditorModel};

/// One supervised edit: source, ground-truth target and instruction.
#[derive(Clone, Debug)]
pub struct EditExample {
    pub src: Image,
    pub tgt: Image,
    pub instruction: ComplexInstruction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps1: usize,
    pub steps2: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps1: 2000, steps2: 1000, batch_size: 4, lr: 1e-3, clip_norm: 1.0, seed: 0 }
    }
}

/// A training phase: 1 trains on single-edit samples, 2 on multi-edit ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase(pub u8);

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Batch loss of every step, phase 1 first.
    pub losses: Vec<f64>,
    pub phase1: Checkpoint,
    pub phase2: Checkpoint,
}

impl TrainReport {
    /// Mean loss over the `window` steps ending at `step` (1-indexed).
    pub fn running_mean(&self, step: usize, window: usize) -> f64 {
        let end = step.min(self.losses.len());
        let start = end.saturating_sub(window);
        let s = &self.losses[start..end];
        s.iter().sum::<f64>() / s.len() as f64
    }
}

/// Draws `ε ~ N(0, I)` and noises `y` to `z_t = √ᾱ_t·y + √(1−ᾱ_t)·ε`.
pub fn noise_latent<R: Rng + ?Sized>(model: &EditorModel, y: &Tensor, t: usize, rng: &mut R) -> (Tensor, Tensor) {
    let ab = model.schedule.alpha_bar(t);
    let eps: Vec<f64> = (0..y.len()).map(|_| rng.sample(StandardNormal)).collect();
    let z: Vec<f64> = y.data().iter().zip(&eps).map(|(y, e)| ab.sqrt() * y + (1.0 - ab).sqrt() * e).collect();
    (Tensor::new(y.shape(), z).expect("same shape"), Tensor::new(y.shape(), eps).expect("same shape"))
}

/// Noise-prediction loss of one example at timestep `t`, with gradients
/// accumulated into the model's store scaled by `weight`.
pub fn example_loss<R: Rng + ?Sized>(
    model: &mut EditorModel,
    example: &EditExample,
    t: usize,
    weight: f64,
    rng: &mut R,
) -> Result<f64, EditorError> {
    let cond = model.condition(&example.src, example.instruction.subs())?;
    let (z_t, eps) = noise_latent(model, &example.tgt.to_tensor(), t, rng);
    let mut tape = Tape::new();
    let z = tape.constant(z_t);
    let pred = model.net.forward(&mut tape, &model.store, z, &cond, t as f64, None)?;
    let target = tape.constant(eps);
    let loss = tape.mse(pred, target)?;
    let value = tape.value(loss).data()[0];
    let scaled = tape.scale(loss, weight)?;
    tape.backward(scaled, &mut model.store)?;
    Ok(value)
}

/// One optimizer step on `batch`; returns the mean loss.
pub fn training_step<R: Rng + ?Sized>(
    model: &mut EditorModel,
    opt: &mut Adam,
    batch: &[&EditExample],
    step: usize,
    rng: &mut R,
) -> Result<f64, EditorError> {
    if batch.is_empty() {
        return Err(EditorError::EmptyCorpus);
    }
    let weight = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for ex in batch {
        let t = rng.random_range(1..=model.schedule.t_total);
        total += example_loss(model, ex, t, weight, rng)?;
    }
    let loss = total * weight;
    if !loss.is_finite() {
        model.store.zero_grads();
        return Err(EditorError::NonFiniteLoss { step });
    }
    opt.step(&mut model.store);
    Ok(loss)
}

/// Phase 1 on `simple`, then phase 2 on `complex`, sharing one optimizer
/// and one random stream. `progress` sees `(phase, step, loss)` after every
/// step.
pub fn train_two_phase(
    model: &mut EditorModel,
    simple: &[EditExample],
    complex: &[EditExample],
    cfg: &TrainConfig,
    mut progress: impl FnMut(Phase, usize, f64),
) -> Result<TrainReport, EditorError> {
    if (cfg.steps1 > 0 && simple.is_empty()) || (cfg.steps2 > 0 && complex.is_empty()) {
        return Err(EditorError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(&model.store, cfg.lr);
    opt.clip_norm = Some(cfg.clip_norm);
    let mut losses = Vec::with_capacity(cfg.steps1 + cfg.steps2);
    let mut phase1 = None;
    for (phase, corpus, steps) in [(Phase(1), simple, cfg.steps1), (Phase(2), complex, cfg.steps2)] {
        for _ in 0..steps {
            let batch: Vec<&EditExample> =
                (0..cfg.batch_size.max(1)).map(|_| &corpus[rng.random_range(0..corpus.len())]).collect();
            let step = losses.len() + 1;
            let loss = training_step(model, &mut opt, &batch, step, &mut rng)?;
            losses.push(loss);
            progress(phase, step, loss);
        }
        let ckpt =
            model.to_checkpoint().with_meta("phase", phase.0).with_meta("steps", losses.len()).with_meta("train", cfg);
        if phase.0 == 1 {
            phase1 = Some(ckpt);
        } else {
            return Ok(TrainReport { losses, phase1: phase1.expect("phase 1 ran first"), phase2: ckpt });
        }
    }
    unreachable!("the loop returns after phase 2")
}
