//! Layers built from tape operations: linear maps, layer norm, MLPs,
//! single-head attention and the two transformer block flavours used by
//! the editing model.

use rand::Rng;

use super::{ParamId, ParamStore, Tape, TensorError, Var};

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    /// `x·W (+ b)` with `W: [d_in, d_out]`, initialized N(0, gain²/d_in).
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
        gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.randn(format!("{name}.weight"), &[d_in, d_out], gain / (d_in as f64).sqrt(), rng)?;
        let bias = if bias { Some(store.zeros(format!("{name}.bias"), &[1, d_out])?) } else { None };
        Ok(Self { weight, bias })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let y = tape.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = tape.param(store, b);
                tape.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.ones(format!("{name}.gamma"), &[1, d])?,
            beta: store.zeros(format!("{name}.beta"), &[1, d])?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        tape.layer_norm(x, g, b)
    }
}

/// Two-layer perceptron with GELU.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(store, &format!("{name}.fc1"), d_in, d_hidden, true, 1.0, rng)?,
            fc2: Linear::new(store, &format!("{name}.fc2"), d_hidden, d_out, true, 1.0, rng)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.fc1.forward(tape, store, x)?;
        let h = tape.gelu(h)?;
        self.fc2.forward(tape, store, h)
    }
}

/// Scaled dot-product attention with a single head.
#[derive(Clone, Debug)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub d: usize,
}

impl Attention {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), d, d, false, 1.0, rng)?,
            k: Linear::new(store, &format!("{name}.k"), d, d, false, 1.0, rng)?,
            v: Linear::new(store, &format!("{name}.v"), d, d, false, 1.0, rng)?,
            out: Linear::new(store, &format!("{name}.out"), d, d, true, 0.5, rng)?,
            d,
        })
    }

    /// Rows of `queries` attend over rows of `context`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, queries: Var, context: Var) -> Result<Var> {
        let q = self.q.forward(tape, store, queries)?;
        let k = self.k.forward(tape, store, context)?;
        let v = self.v.forward(tape, store, context)?;
        let a = attend(tape, q, k, v, self.d)?;
        self.out.forward(tape, store, a)
    }
}

/// `softmax(q·kᵀ/√d)·v`.
pub fn attend(tape: &mut Tape, q: Var, k: Var, v: Var, d: usize) -> Result<Var> {
    let logits = tape.matmul_nt(q, k)?;
    let logits = tape.scale(logits, 1.0 / (d as f64).sqrt())?;
    let w = tape.softmax_rows(logits)?;
    tape.matmul(w, v)
}

/// Pre-norm block: self-attention then MLP, each with a residual.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub mlp: Mlp,
}

impl TransformerBlock {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), d)?,
            attn: Attention::new(store, &format!("{name}.attn"), d, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), d)?,
            mlp: Mlp::new(store, &format!("{name}.mlp"), d, 2 * d, d, rng)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.ln1.forward(tape, store, x)?;
        let a = self.attn.forward(tape, store, h, h)?;
        let x = tape.add(x, a)?;
        let h = self.ln2.forward(tape, store, x)?;
        let m = self.mlp.forward(tape, store, h)?;
        tape.add(x, m)
    }
}

/// A stack of blocks in which a fixed set of learnable queries reads a
/// variable-length context.
///
/// Each block lets the queries attend jointly over `[context; queries]`
/// (cross- and self-attention in one softmax), followed by an MLP; both
/// steps are residual. The output has one row per query.
#[derive(Clone, Debug)]
pub struct QueryTransformer {
    pub queries: ParamId,
    pub ctx_norm: LayerNorm,
    pub blocks: Vec<TransformerBlock>,
    pub final_norm: LayerNorm,
}

impl QueryTransformer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        n_blocks: usize,
        n_queries: usize,
        d: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let queries = store.randn(format!("{name}.queries"), &[n_queries, d], 1.0, rng)?;
        let ctx_norm = LayerNorm::new(store, &format!("{name}.ctx_norm"), d)?;
        let blocks = (0..n_blocks)
            .map(|i| TransformerBlock::new(store, &format!("{name}.block{i}"), d, rng))
            .collect::<Result<Vec<_>>>()?;
        let final_norm = LayerNorm::new(store, &format!("{name}.final_norm"), d)?;
        Ok(Self { queries, ctx_norm, blocks, final_norm })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, context: Var) -> Result<Var> {
        let ctx = self.ctx_norm.forward(tape, store, context)?;
        let mut x = tape.param(store, self.queries);
        for block in &self.blocks {
            let h = block.ln1.forward(tape, store, x)?;
            let kv = tape.concat_rows(&[ctx, h])?;
            let a = block.attn.forward(tape, store, h, kv)?;
            x = tape.add(x, a)?;
            let h = block.ln2.forward(tape, store, x)?;
            let m = block.mlp.forward(tape, store, h)?;
            x = tape.add(x, m)?;
        }
        self.final_norm.forward(tape, store, x)
    }
}
