//! Background-consistent cross-attention: positions outside every edit box
//! read a learned summary of the source image's pixel features.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::instructions::Mask;
use crate::numkernel::nn::{Linear, Mlp, QueryTransformer};
use crate::numkernel::{ParamStore, Tape, Tensor, TensorError, Var};
use crate::saca::MaskMode;

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BccaConfig {
    /// Transformer blocks in the feature summarizer.
    pub n_blocks: usize,
    /// Learnable queries, i.e. rows of the summary.
    pub n_queries: usize,
    pub d: usize,
    pub mask_mode: MaskMode,
}

impl Default for BccaConfig {
    fn default() -> Self {
        Self { n_blocks: 4, n_queries: 16, d: 32, mask_mode: MaskMode::Literal }
    }
}

/// Per-patch MLP followed by a query transformer that condenses the
/// patches into `n_queries` rows.
#[derive(Clone, Debug)]
pub struct BackgroundEncoder {
    pub mlp: Mlp,
    pub summarizer: QueryTransformer,
}

impl BackgroundEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_vis: usize,
        cfg: &BccaConfig,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            mlp: Mlp::new(store, &format!("{name}.mlp"), d_vis, cfg.d, cfg.d, rng)?,
            summarizer: QueryTransformer::new(
                store,
                &format!("{name}.summarizer"),
                cfg.n_blocks,
                cfg.n_queries,
                cfg.d,
                rng,
            )?,
        })
    }

    /// Summary `f: [n_queries, d]` of visual patch features `[n_patch, d_vis]`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, patches: &Tensor) -> Result<Var> {
        let x = tape.constant(patches.clone());
        let h = self.mlp.forward(tape, store, x)?;
        self.summarizer.forward(tape, store, h)
    }
}

/// Per-layer key and value projections of the summary.
#[derive(Clone, Debug)]
pub struct BccaAttention {
    pub w_k: Linear,
    pub w_v: Linear,
    pub d: usize,
    pub mode: MaskMode,
}

impl BccaAttention {
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

/// Background features `BG_t` for queries `q = z_t·W_q` (`[H·W, d]`).
///
/// Rows inside `m_union` are exactly zero in both mask modes.
pub fn bcca_forward(
    tape: &mut Tape,
    store: &ParamStore,
    attn: &BccaAttention,
    q: Var,
    f: Var,
    m_union: &Mask,
) -> Result<Var> {
    let (rows, _) = tape.value(q).dims2()?;
    if m_union.cells().len() != rows {
        return Err(TensorError::InvalidArgument(format!(
            "{rows} query rows for a mask of {} cells",
            m_union.cells().len()
        )));
    }
    let keep = m_union.complement().to_f64();
    let k = attn.w_k.forward(tape, store, f)?;
    let v = attn.w_v.forward(tape, store, f)?;
    let logits = tape.matmul_nt(q, k)?;
    let logits = tape.scale(logits, 1.0 / (attn.d as f64).sqrt())?;
    let logits = match attn.mode {
        MaskMode::Literal => tape.scale_rows(logits, keep.clone())?,
        MaskMode::Additive => logits,
    };
    let w = tape.softmax_rows(logits)?;
    let out = tape.matmul(w, v)?;
    // zeroed logits still give a uniform softmax, so the output is gated too
    tape.scale_rows(out, keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instructions::{rasterize, BBox};
    use crate::numkernel::finite_diff_check;
    use crate::numkernel::nn::attend;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(d: usize, mode: MaskMode) -> (ParamStore, BackgroundEncoder, BccaAttention) {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut store = ParamStore::new();
        let cfg = BccaConfig { d, mask_mode: mode, ..BccaConfig::default() };
        let enc = BackgroundEncoder::new(&mut store, "bg", 3, &cfg, &mut rng).unwrap();
        let attn = BccaAttention::new(&mut store, "bcca", d, mode, &mut rng).unwrap();
        (store, enc, attn)
    }

    #[test]
    fn support_is_the_complement() {
        for mode in [MaskMode::Literal, MaskMode::Additive] {
            let (store, enc, attn) = setup(4, mode);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut tape = Tape::new();
            let patches = Tensor::randn(&[16, 3], 1.0, &mut rng);
            let f = enc.forward(&mut tape, &store, &patches).unwrap();
            let q = tape.constant(Tensor::randn(&[16, 4], 1.0, &mut rng));
            let m = rasterize(&BBox::new(0.1, 0.2, 0.6, 0.9).unwrap(), 4, 4);
            let bg = bcca_forward(&mut tape, &store, &attn, q, f, &m).unwrap();
            for r in 0..16 {
                let zero = tape.value(bg).row(r).iter().all(|&x| x == 0.0);
                assert_eq!(zero, m.cells()[r], "row {r}");
            }
            let full = bcca_forward(&mut tape, &store, &attn, q, f, &Mask::full(4, 4)).unwrap();
            assert!(tape.value(full).data().iter().all(|&x| x == 0.0));
            let none = bcca_forward(&mut tape, &store, &attn, q, f, &Mask::empty(4, 4)).unwrap();
            let k = attn.w_k.forward(&mut tape, &store, f).unwrap();
            let v = attn.w_v.forward(&mut tape, &store, f).unwrap();
            let plain = attend(&mut tape, q, k, v, 4).unwrap();
            assert_eq!(tape.value(none), tape.value(plain));
        }
    }

    #[test]
    fn summary_depends_on_source() {
        let (store, enc, _) = setup(4, MaskMode::Literal);
        let mut tape = Tape::new();
        let zeros = enc.forward(&mut tape, &store, &Tensor::zeros(&[4, 3])).unwrap();
        let zeros2 = enc.forward(&mut tape, &store, &Tensor::zeros(&[4, 3])).unwrap();
        let ones = enc.forward(&mut tape, &store, &Tensor::ones(&[4, 3])).unwrap();
        assert_eq!(tape.value(zeros), tape.value(zeros2));
        assert_ne!(tape.value(zeros), tape.value(ones));
        assert_eq!(tape.value(ones).shape(), &[16, 4]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for mode in [MaskMode::Literal, MaskMode::Additive] {
            let (mut store, enc, attn) = setup(4, mode);
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let patches = Tensor::randn(&[4, 3], 1.0, &mut rng);
            let qv = Tensor::randn(&[4, 4], 1.0, &mut rng);
            let m = rasterize(&BBox::new(0.0, 0.0, 0.5, 1.0).unwrap(), 2, 2);
            let err = finite_diff_check(&mut store, 1e-5, |tape, s| {
                let f = enc.forward(tape, s, &patches)?;
                let q = tape.constant(qv.clone());
                let bg = bcca_forward(tape, s, &attn, q, f, &m)?;
                let sq = tape.mul(bg, bg)?;
                tape.mean(sq)
            })
            .unwrap();
            assert!(err < 1e-4, "{mode}: {err}");
        }
    }
}
