use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::image::Image;
use crate::instructions::SubInstruction;
use crate::numkernel::Tensor;

use super::{ancestral_step, AttentionTrace, EditorError, EditorModel};

/// Noise levels of one sampler step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub sigma: f64,
    pub sigma_next: f64,
    pub sigma_up: f64,
    pub sigma_down: f64,
}

#[derive(Clone, Debug)]
pub struct SampleOutput {
    pub image: Image,
    pub steps: Vec<StepRecord>,
    /// Foreground attention maps of the last step, when requested.
    pub trace: Option<AttentionTrace>,
}

pub fn euler_ancestral_sample(
    model: &EditorModel,
    src: &Image,
    subs: &[SubInstruction],
    n_steps: usize,
    seed: u64,
) -> Result<Image, EditorError> {
    Ok(euler_ancestral(model, src, subs, n_steps, seed, false)?.image)
}

/// Euler-ancestral sampling in the `x = y + σ·ε` parametrization.
///
/// The model sees `x / √(1 + σ²)` at the fractional timestep matching `σ`;
/// each step moves to `σ_down` along the predicted noise and adds fresh
/// noise of scale `σ_up`. The final latent is clamped to pixel range.
pub fn euler_ancestral(
    model: &EditorModel,
    src: &Image,
    subs: &[SubInstruction],
    n_steps: usize,
    seed: u64,
    trace: bool,
) -> Result<SampleOutput, EditorError> {
    let cond = model.condition(src, subs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigmas = model.schedule.sampler_sigmas(n_steps);
    let n = cond.src.len();
    let mut x: Vec<f64> = (0..n).map(|_| sigmas[0] * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut steps = Vec::with_capacity(n_steps);
    let mut last_trace = None;
    for i in 0..n_steps {
        let (sigma, sigma_next) = (sigmas[i], sigmas[i + 1]);
        let scale = 1.0 / (1.0 + sigma * sigma).sqrt();
        let z = Tensor::new(cond.src.shape(), x.iter().map(|v| v * scale).collect())?;
        let t = model.schedule.t_for_sigma(sigma);
        let mut tr = (trace && i + 1 == n_steps).then(AttentionTrace::default);
        let eps = model.predict_noise(&z, &cond, t, tr.as_mut())?;
        if !eps.is_finite() {
            return Err(EditorError::NonFiniteSample { step: i });
        }
        last_trace = tr.or(last_trace);
        let (up, down) = ancestral_step(sigma, sigma_next);
        // derivative (x - denoised)/σ equals the predicted noise
        for (xv, e) in x.iter_mut().zip(eps.data()) {
            *xv += e * (down - sigma);
        }
        if up > 0.0 {
            for xv in x.iter_mut() {
                *xv += up * rng.sample::<f64, _>(StandardNormal);
            }
        }
        steps.push(StepRecord { sigma, sigma_next, sigma_up: up, sigma_down: down });
    }
    let (h, w) = src.resolution();
    let image = Image::from_tensor(h, w, &Tensor::new(cond.src.shape(), x)?)?;
    Ok(SampleOutput { image, steps, trace: last_trace })
}
