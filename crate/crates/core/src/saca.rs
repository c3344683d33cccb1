//! Spatial-aware cross-attention: each sub-instruction's text tokens,
//! extended with learned tokens derived from its Fourier-encoded box, are
//! read only by the spatial positions inside that box.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::instructions::{BBox, Mask};
use crate::numkernel::nn::{Linear, QueryTransformer};
use crate::numkernel::{ParamStore, Tape, Tensor, TensorError, Var};

type Result<T> = std::result::Result<T, TensorError>;

/// Added to masked-out logits in [`MaskMode::Additive`].
pub const MASKED_LOGIT: f64 = -1e9;

/// How a spatial mask enters the attention logits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Logit rows are multiplied by the decayed mask.
    #[default]
    Literal,
    /// Masked rows get a large negative logit; the decay gates the
    /// attention weights after the softmax.
    Additive,
}

impl fmt::Display for MaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskMode::Literal => "literal",
            MaskMode::Additive => "additive",
        })
    }
}

impl FromStr for MaskMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "literal" => Ok(MaskMode::Literal),
            "additive" => Ok(MaskMode::Additive),
            other => Err(format!("unknown mask mode {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacaConfig {
    /// Number of Fourier frequency bands `K`.
    pub n_freq: usize,
    /// Transformer blocks in the box-token extractor.
    pub n_blocks: usize,
    /// Learnable queries, i.e. spatial tokens per box.
    pub n_queries: usize,
    pub d: usize,
    pub mask_mode: MaskMode,
}

impl Default for SacaConfig {
    fn default() -> Self {
        Self { n_freq: 8, n_blocks: 2, n_queries: 2, d: 32, mask_mode: MaskMode::Literal }
    }
}

/// `f_k = 2^(k-1)` for `k = 1..=n`.
pub fn fourier_bands(n: usize) -> Vec<f64> {
    (0..n).map(|k| f64::from(2u32.pow(k as u32))).collect()
}

/// Fourier features of raw box coordinates.
///
/// Layout: for each coordinate in `x0, y0, x1, y1` order, `K` sines
/// followed by `K` cosines of `2π·c·f_k`; shape `[1, 8K]`.
pub fn fourier_features(coords: [f64; 4], bands: &[f64]) -> Tensor {
    let k = bands.len();
    let mut data = Vec::with_capacity(8 * k);
    for c in coords {
        data.extend(bands.iter().map(|f| (2.0 * std::f64::consts::PI * c * f).sin()));
        data.extend(bands.iter().map(|f| (2.0 * std::f64::consts::PI * c * f).cos()));
    }
    Tensor::new(&[1, 8 * k], data).expect("feature length is 8K")
}

pub fn fourier_encode(bbox: &BBox, bands: &[f64]) -> Tensor {
    fourier_features(bbox.coords(), bands)
}

/// `M · exp(−t / T)`, row-major over the mask grid.
pub fn timestep_mask(mask: &Mask, t: f64, t_total: f64) -> Vec<f64> {
    let decay = (-t / t_total).exp();
    mask.cells().iter().map(|&m| if m { decay } else { 0.0 }).collect()
}

/// Learned box tokens: a linear lift of each coordinate's Fourier features
/// read by a small query transformer.
#[derive(Clone, Debug)]
pub struct SpatialEncoder {
    pub lift: Linear,
    pub extractor: QueryTransformer,
    bands: Vec<f64>,
}

impl SpatialEncoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &SacaConfig, rng: &mut R) -> Result<Self> {
        if cfg.n_freq == 0 {
            return Err(TensorError::InvalidArgument("at least one frequency band is required".into()));
        }
        Ok(Self {
            lift: Linear::new(store, &format!("{name}.lift"), 2 * cfg.n_freq, cfg.d, true, 1.0, rng)?,
            extractor: QueryTransformer::new(
                store,
                &format!("{name}.extractor"),
                cfg.n_blocks,
                cfg.n_queries,
                cfg.d,
                rng,
            )?,
            bands: fourier_bands(cfg.n_freq),
        })
    }

    pub fn bands(&self) -> &[f64] {
        &self.bands
    }

    /// `[n_queries, d]` tokens for `bbox`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, bbox: &BBox) -> Result<Var> {
        let feats = fourier_encode(bbox, &self.bands).reshape(&[4, 2 * self.bands.len()])?;
        let x = tape.constant(feats);
        let lifted = self.lift.forward(tape, store, x)?;
        self.extractor.forward(tape, store, lifted)
    }
}

/// Per-layer key and value projections, shared by every sub-instruction.
#[derive(Clone, Debug)]
pub struct SacaAttention {
    pub w_k: Linear,
    pub w_v: Linear,
    pub d: usize,
    pub mode: MaskMode,
}

impl SacaAttention {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        mode: MaskMode,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            w_k: Linear::new(store, &format!("{name}.k"), d, d, false, 1.0, rng)?,
            w_v: Linear::new(store, &format!("{name}.v"), d, d, false, 1.0, rng)?,
            d,
            mode,
        })
    }
}

/// Everything SACA needs per sample that does not depend on the layer:
/// one context `C_i = [T_i; spatial tokens]` and one rasterized mask per
/// sub-instruction.
#[derive(Clone, Debug)]
pub struct SacaContext {
    pub contexts: Vec<Var>,
    pub masks: Vec<Mask>,
    /// `M_i(r) / Σ_j M_j(r)`, zero outside every box.
    combine: Vec<Vec<f64>>,
}

impl SacaContext {
    /// Builds contexts from text token blocks and boxes; masks must share a
    /// resolution.
    pub fn build(
        tape: &mut Tape,
        store: &ParamStore,
        spatial: &SpatialEncoder,
        text_blocks: &[Tensor],
        bboxes: &[BBox],
        masks: Vec<Mask>,
    ) -> Result<Self> {
        if text_blocks.len() != bboxes.len() || bboxes.len() != masks.len() {
            return Err(TensorError::InvalidArgument(format!(
                "{} text blocks, {} boxes and {} masks",
                text_blocks.len(),
                bboxes.len(),
                masks.len()
            )));
        }
        let mut contexts = Vec::with_capacity(bboxes.len());
        for (text, bbox) in text_blocks.iter().zip(bboxes) {
            let t = tape.constant(text.clone());
            let s = spatial.forward(tape, store, bbox)?;
            contexts.push(tape.concat_rows(&[t, s])?);
        }
        Self::from_parts(contexts, masks)
    }

    pub fn from_parts(contexts: Vec<Var>, masks: Vec<Mask>) -> Result<Self> {
        if contexts.is_empty() || contexts.len() != masks.len() {
            return Err(TensorError::InvalidArgument(format!("{} contexts for {} masks", contexts.len(), masks.len())));
        }
        let cells = masks[0].cells().len();
        if masks.iter().any(|m| m.cells().len() != cells) {
            return Err(TensorError::InvalidArgument("masks differ in resolution".into()));
        }
        let counts: Vec<f64> = (0..cells).map(|r| masks.iter().filter(|m| m.cells()[r]).count() as f64).collect();
        let combine = masks
            .iter()
            .map(|m| (0..cells).map(|r| if m.cells()[r] { 1.0 / counts[r] } else { 0.0 }).collect())
            .collect();
        Ok(Self { contexts, masks, combine })
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }
}

/// Foreground features `FG_t` for queries `q = z_t·W_q` (`[H·W, d]`).
///
/// Each sub-instruction attends separately; its output is kept only on its
/// own cells and overlapping boxes are averaged. When `trace` is given, it
/// receives one vector per sub holding the row norm of that sub's
/// contribution.
#[allow(clippy::too_many_arguments)]
pub fn saca_forward(
    tape: &mut Tape,
    store: &ParamStore,
    attn: &SacaAttention,
    q: Var,
    ctx: &SacaContext,
    t: f64,
    t_total: f64,
    mut trace: Option<&mut Vec<Vec<f64>>>,
) -> Result<Var> {
    let (rows, _) = tape.value(q).dims2()?;
    if ctx.masks[0].cells().len() != rows {
        return Err(TensorError::InvalidArgument(format!(
            "{rows} query rows for masks of {} cells",
            ctx.masks[0].cells().len()
        )));
    }
    let decay = (-t / t_total).exp();
    let mut fg: Option<Var> = None;
    for (i, &c) in ctx.contexts.iter().enumerate() {
        let k = attn.w_k.forward(tape, store, c)?;
        let v = attn.w_v.forward(tape, store, c)?;
        let logits = tape.matmul_nt(q, k)?;
        let logits = tape.scale(logits, 1.0 / (attn.d as f64).sqrt())?;
        let mask = &ctx.masks[i];
        let out = match attn.mode {
            MaskMode::Literal => {
                let gated = tape.scale_rows(logits, timestep_mask(mask, t, t_total))?;
                let w = tape.softmax_rows(gated)?;
                tape.matmul(w, v)?
            }
            MaskMode::Additive => {
                let n_keys = tape.value(k).rows();
                let bias: Vec<f64> = mask
                    .cells()
                    .iter()
                    .flat_map(|&m| std::iter::repeat_n(if m { 0.0 } else { MASKED_LOGIT }, n_keys))
                    .collect();
                let bias = tape.constant(Tensor::new(&[rows, n_keys], bias)?);
                let biased = tape.add(logits, bias)?;
                let w = tape.softmax_rows(biased)?;
                let gate = mask.cells().iter().map(|&m| if m { decay } else { 0.0 }).collect();
                let w = tape.scale_rows(w, gate)?;
                tape.matmul(w, v)?
            }
        };
        let contrib = tape.scale_rows(out, ctx.combine[i].clone())?;
        if let Some(tr) = trace.as_deref_mut() {
            let val = tape.value(contrib);
            tr.push((0..rows).map(|r| val.row(r).iter().map(|x| x * x).sum::<f64>().sqrt()).collect());
        }
        fg = Some(match fg {
            None => contrib,
            Some(acc) => tape.add(acc, contrib)?,
        });
    }
    Ok(fg.expect("context is non-empty"))
}
