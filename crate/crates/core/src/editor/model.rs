use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bcca::{bcca_forward, BackgroundEncoder, BccaAttention, BccaConfig};
use crate::encoders::{encode_instruction_set, sinusoidal, ToyTextEncoder, ToyVisualEncoder, VisualEncoder};
use crate::image::{Image, CHANNELS};
use crate::instructions::{rasterize, union_mask, BBox, Mask, SubInstruction};
use crate::numkernel::nn::{Attention, LayerNorm, Linear, Mlp};
use crate::numkernel::{Checkpoint, ParamStore, Tape, Tensor, TensorError, Var};
use crate::saca::{saca_forward, MaskMode, SacaAttention, SacaConfig, SacaContext, SpatialEncoder};

use super::{DiffusionSchedule, EditorError};

/// Which cross-attention pathways a model uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Full,
    NoSaca,
    NoBcca,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoSaca, Variant::NoBcca];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSaca => "no-saca",
            Variant::NoBcca => "no-bcca",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditorConfig {
    pub height: usize,
    pub width: usize,
    pub d: usize,
    pub n_layers: usize,
    /// Weight of the foreground pathway in the fused cross-attention.
    pub lambda: f64,
    pub variant: Variant,
    pub mask_mode: MaskMode,
    pub n_freq: usize,
    pub saca_blocks: usize,
    pub saca_queries: usize,
    pub bcca_blocks: usize,
    pub bcca_queries: usize,
    pub patch: usize,
    pub t_total: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub text_seed: u64,
    pub visual_seed: u64,
}

impl Default for EditorConfig {
    fn default() -> Self {
        Self {
            height: 16,
            width: 16,
            d: 32,
            n_layers: 2,
            lambda: 0.5,
            variant: Variant::Full,
            mask_mode: MaskMode::Literal,
            n_freq: 8,
            saca_blocks: 2,
            saca_queries: 2,
            bcca_blocks: 4,
            bcca_queries: 16,
            patch: 1,
            t_total: 1000,
            beta_start: 1e-4,
            beta_end: 2e-2,
            text_seed: 0x7e57,
            visual_seed: 0x515a,
        }
    }
}

impl EditorConfig {
    pub fn saca(&self) -> SacaConfig {
        SacaConfig {
            n_freq: self.n_freq,
            n_blocks: self.saca_blocks,
            n_queries: self.saca_queries,
            d: self.d,
            mask_mode: self.mask_mode,
        }
    }

    pub fn bcca(&self) -> BccaConfig {
        BccaConfig { n_blocks: self.bcca_blocks, n_queries: self.bcca_queries, d: self.d, mask_mode: self.mask_mode }
    }

    pub fn schedule(&self) -> DiffusionSchedule {
        DiffusionSchedule::linear(self.t_total, self.beta_start, self.beta_end)
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self) -> Result<(), EditorError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(EditorError::Lambda(self.lambda));
        }
        if self.d == 0 || self.n_layers == 0 || self.height == 0 || self.width == 0 {
            return Err(EditorError::Config("dimensions must be positive".into()));
        }
        if !self.d.is_multiple_of(2) {
            return Err(EditorError::Config("model width must be even".into()));
        }
        Ok(())
    }
}

/// `z' = λ·FG + (1 − λ)·BG`.
pub fn fuse(tape: &mut Tape, fg: Var, bg: Var, lambda: f64) -> Result<Var, EditorError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(EditorError::Lambda(lambda));
    }
    let a = tape.scale(fg, lambda)?;
    let b = tape.scale(bg, 1.0 - lambda)?;
    Ok(tape.add(a, b)?)
}

/// Per-sample inputs that do not depend on parameters.
#[derive(Clone, Debug)]
pub struct Conditioning {
    /// Source latent `E(x)`, `[H·W, 3]`.
    pub src: Tensor,
    pub text_blocks: Vec<Tensor>,
    pub bboxes: Vec<BBox>,
    pub masks: Vec<Mask>,
    pub union: Mask,
    /// Visual patch features of the source.
    pub patches: Tensor,
}

/// Per-layer, per-sub contribution norms of the foreground pathway.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttentionTrace {
    pub layers: Vec<Vec<Vec<f64>>>,
}

impl AttentionTrace {
    /// Mean over layers of each sub's map.
    pub fn per_sub(&self) -> Vec<Vec<f64>> {
        let Some(first) = self.layers.first() else {
            return Vec::new();
        };
        let n = self.layers.len() as f64;
        (0..first.len())
            .map(|i| (0..first[i].len()).map(|r| self.layers.iter().map(|l| l[i][r]).sum::<f64>() / n).collect())
            .collect()
    }
}

/// Self-attention, fused cross-attention, MLP; each residual.
#[derive(Clone, Debug)]
pub struct DenoiserBlock {
    pub ln_self: LayerNorm,
    pub self_attn: Attention,
    pub ln_cross: LayerNorm,
    pub w_q: Linear,
    pub saca: SacaAttention,
    pub bcca: BccaAttention,
    pub ln_mlp: LayerNorm,
    pub mlp: Mlp,
}

/// Layer-independent state of one forward pass.
pub struct CrossInputs<'a> {
    pub saca: Option<&'a SacaContext>,
    pub background: Option<Var>,
    pub union: &'a Mask,
    pub t: f64,
    pub t_total: f64,
    pub lambda: f64,
    pub variant: Variant,
}

impl DenoiserBlock {
    fn new(store: &mut ParamStore, name: &str, cfg: &EditorConfig, rng: &mut ChaCha8Rng) -> Result<Self, TensorError> {
        let d = cfg.d;
        Ok(Self {
            ln_self: LayerNorm::new(store, &format!("{name}.ln_self"), d)?,
            self_attn: Attention::new(store, &format!("{name}.self_attn"), d, rng)?,
            ln_cross: LayerNorm::new(store, &format!("{name}.ln_cross"), d)?,
            w_q: Linear::new(store, &format!("{name}.cross_q"), d, d, false, 1.0, rng)?,
            saca: SacaAttention::new(store, &format!("{name}.saca"), d, cfg.mask_mode, rng)?,
            bcca: BccaAttention::new(store, &format!("{name}.bcca"), d, cfg.mask_mode, rng)?,
            ln_mlp: LayerNorm::new(store, &format!("{name}.ln_mlp"), d)?,
            mlp: Mlp::new(store, &format!("{name}.mlp"), d, 2 * d, d, rng)?,
        })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Var,
        cross: &CrossInputs<'_>,
        trace: Option<&mut Vec<Vec<f64>>>,
    ) -> Result<Var, EditorError> {
        let n = self.ln_self.forward(tape, store, h)?;
        let a = self.self_attn.forward(tape, store, n, n)?;
        let h = tape.add(h, a)?;

        let n = self.ln_cross.forward(tape, store, h)?;
        let q = self.w_q.forward(tape, store, n)?;
        let fg = match (cross.variant, cross.saca) {
            (Variant::NoSaca, _) => None,
            (_, Some(ctx)) => Some(saca_forward(tape, store, &self.saca, q, ctx, cross.t, cross.t_total, trace)?),
            (_, None) => return Err(EditorError::Config("foreground pathway needs sub-instructions".into())),
        };
        let bg = match (cross.variant, cross.background) {
            (Variant::NoBcca, _) => None,
            (_, Some(f)) => Some(bcca_forward(tape, store, &self.bcca, q, f, cross.union)?),
            (_, None) => return Err(EditorError::Config("background pathway needs source features".into())),
        };
        let z = match (fg, bg) {
            (Some(fg), Some(bg)) => fuse(tape, fg, bg, cross.lambda)?,
            (Some(fg), None) => fg,
            (None, Some(bg)) => bg,
            (None, None) => unreachable!("every variant keeps one pathway"),
        };
        let h = tape.add(h, z)?;

        let n = self.ln_mlp.forward(tape, store, h)?;
        let m = self.mlp.forward(tape, store, n)?;
        Ok(tape.add(h, m)?)
    }
}

/// Layers of the denoiser; parameters live in a separate [`ParamStore`].
#[derive(Clone, Debug)]
pub struct EditorNet {
    pub config: EditorConfig,
    pub input: Linear,
    pub time_mlp: Mlp,
    pub blocks: Vec<DenoiserBlock>,
    pub spatial: SpatialEncoder,
    pub background: BackgroundEncoder,
    pub out_norm: LayerNorm,
    pub out: Linear,
    position: Tensor,
    text: ToyTextEncoder,
    visual: ToyVisualEncoder,
}

impl EditorNet {
    pub fn new(store: &mut ParamStore, config: EditorConfig, seed: u64) -> Result<Self, EditorError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d;
        let input = Linear::new(store, "input", 2 * CHANNELS, d, true, 1.0, &mut rng)?;
        let time_mlp = Mlp::new(store, "time", d, d, d, &mut rng)?;
        let blocks = (0..config.n_layers)
            .map(|i| DenoiserBlock::new(store, &format!("block{i}"), &config, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        let spatial = SpatialEncoder::new(store, "spatial", &config.saca(), &mut rng)?;
        let background = BackgroundEncoder::new(store, "background", d, &config.bcca(), &mut rng)?;
        let out_norm = LayerNorm::new(store, "out_norm", d)?;
        let out = Linear::new(store, "out", d, CHANNELS, true, 0.5, &mut rng)?;
        let position = grid_position(config.height, config.width, d);
        let text = ToyTextEncoder::new(d, config.text_seed);
        let visual = ToyVisualEncoder::new(d, config.patch, config.visual_seed);
        Ok(Self { config, input, time_mlp, blocks, spatial, background, out_norm, out, position, text, visual })
    }

    pub fn condition(&self, src: &Image, subs: &[SubInstruction]) -> Result<Conditioning, EditorError> {
        let (h, w) = (self.config.height, self.config.width);
        if src.resolution() != (h, w) {
            return Err(EditorError::Resolution { expected: (h, w), found: src.resolution() });
        }
        if subs.is_empty() {
            return Err(EditorError::Config("at least one sub-instruction is required".into()));
        }
        let enc = encode_instruction_set(&self.text, subs);
        let text_blocks = (0..subs.len()).map(|i| enc.block(i)).collect();
        let bboxes: Vec<BBox> = subs.iter().map(|s| s.bbox).collect();
        let masks: Vec<Mask> = bboxes.iter().map(|b| rasterize(b, h, w)).collect();
        let union = union_mask(&masks)?;
        let patches = self.visual.encode(src)?;
        Ok(Conditioning { src: src.to_tensor(), text_blocks, bboxes, masks, union, patches })
    }

    /// Layer-independent inputs for one pass.
    pub fn prepare(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        cond: &Conditioning,
    ) -> Result<(Option<SacaContext>, Option<Var>), EditorError> {
        let saca = if self.config.variant == Variant::NoSaca {
            None
        } else {
            Some(SacaContext::build(tape, store, &self.spatial, &cond.text_blocks, &cond.bboxes, cond.masks.clone())?)
        };
        let background = if self.config.variant == Variant::NoBcca {
            None
        } else {
            Some(self.background.forward(tape, store, &cond.patches)?)
        };
        Ok((saca, background))
    }

    /// Noise prediction `ε̂: [H·W, 3]` for the noisy latent `z_t`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        z_t: Var,
        cond: &Conditioning,
        t: f64,
        mut trace: Option<&mut AttentionTrace>,
    ) -> Result<Var, EditorError> {
        let src = tape.constant(cond.src.clone());
        let x = tape.concat_cols(&[z_t, src])?;
        let h = self.input.forward(tape, store, x)?;
        let pos = tape.constant(self.position.clone());
        let mut h = tape.add(h, pos)?;

        let temb = tape.constant(Tensor::new(&[1, self.config.d], sinusoidal(t, self.config.d))?);
        let temb = self.time_mlp.forward(tape, store, temb)?;

        let (saca, background) = self.prepare(tape, store, cond)?;
        let cross = CrossInputs {
            saca: saca.as_ref(),
            background,
            union: &cond.union,
            t,
            t_total: self.config.t_total as f64,
            lambda: self.config.lambda,
            variant: self.config.variant,
        };
        for block in &self.blocks {
            h = tape.add_row(h, temb)?;
            let mut layer = Vec::new();
            h = block.forward(tape, store, h, &cross, trace.is_some().then_some(&mut layer))?;
            if let Some(tr) = trace.as_deref_mut() {
                tr.layers.push(layer);
            }
        }
        let h = self.out_norm.forward(tape, store, h)?;
        Ok(self.out.forward(tape, store, h)?)
    }
}

/// Fixed 2-D sinusoidal position table: the first half of each row encodes
/// the pixel row, the second half the column.
fn grid_position(height: usize, width: usize, d: usize) -> Tensor {
    let half = d / 2;
    let mut data = Vec::with_capacity(height * width * d);
    for r in 0..height {
        let pr = sinusoidal(r as f64, half);
        for c in 0..width {
            data.extend_from_slice(&pr);
            data.extend(sinusoidal(c as f64, d - half));
        }
    }
    Tensor::new(&[height * width, d], data).expect("table size")
}

/// A denoiser with its parameters.
#[derive(Clone, Debug)]
pub struct EditorModel {
    pub net: EditorNet,
    pub store: ParamStore,
    pub schedule: DiffusionSchedule,
    pub init_seed: u64,
}

impl EditorModel {
    pub fn new(config: EditorConfig, seed: u64) -> Result<Self, EditorError> {
        let mut store = ParamStore::new();
        let schedule = config.schedule();
        let net = EditorNet::new(&mut store, config, seed)?;
        Ok(Self { net, store, schedule, init_seed: seed })
    }

    pub fn config(&self) -> &EditorConfig {
        &self.net.config
    }

    /// Changes the fusion weight; parameters are unaffected.
    pub fn set_lambda(&mut self, lambda: f64) -> Result<(), EditorError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(EditorError::Lambda(lambda));
        }
        self.net.config.lambda = lambda;
        Ok(())
    }

    pub fn condition(&self, src: &Image, subs: &[SubInstruction]) -> Result<Conditioning, EditorError> {
        self.net.condition(src, subs)
    }

    pub fn predict_noise(
        &self,
        z_t: &Tensor,
        cond: &Conditioning,
        t: f64,
        trace: Option<&mut AttentionTrace>,
    ) -> Result<Tensor, EditorError> {
        let mut tape = Tape::new();
        let z = tape.constant(z_t.clone());
        let eps = self.net.forward(&mut tape, &self.store, z, cond, t, trace)?;
        Ok(tape.value(eps).clone())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_store(&self.store).with_meta("config", &self.net.config).with_meta("init_seed", self.init_seed)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, EditorError> {
        let config: EditorConfig = ckpt
            .meta
            .get("config")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| EditorError::Checkpoint(format!("config: {e}")))?
            .ok_or_else(|| EditorError::Checkpoint("missing config".into()))?;
        let seed = ckpt.meta.get("init_seed").and_then(|v| v.as_u64()).unwrap_or(0);
        let mut model = Self::new(config, seed)?;
        ckpt.load_into(&mut model.store)?;
        Ok(model)
    }
}
