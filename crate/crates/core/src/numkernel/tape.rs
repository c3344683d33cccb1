//! Reverse-mode automatic differentiation over a linear operation tape.
//!
//! Every operation appends a node holding its output value and the handles
//! of its inputs. [`Tape::backward`] walks the nodes in reverse order and
//! accumulates vector-Jacobian products; gradients that reach parameter
//! leaves are added into the owning [`ParamStore`].

use std::collections::HashMap;

use super::tensor::gemm;
use super::{ParamId, ParamStore, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Vec<f64>),
    ScaleRows(Var, Vec<f64>),
    Exp(Var),
    Gelu(Var),
    Relu(Var),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows { x: Var, start: usize },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients of every node on a tape with respect to one scalar loss.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if any flowed there.
    pub fn get(&self, var: Var) -> Option<Tensor> {
        let g = self.grads[var.0].as_ref()?;
        Tensor::new(&self.shapes[var.0], g.clone()).ok()
    }
}

/// A recording of one forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

const LN_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn dims(&self, v: Var) -> Result<(usize, usize), TensorError> {
        self.nodes[v.0].value.dims2()
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var, TensorError> {
        if cfg!(debug_assertions) && !value.is_finite() {
            return Err(TensorError::NonFinite(op_name(&op)));
        }
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// A constant input; no gradient is tracked through it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, false)
    }

    /// An input whose gradient is reported by [`Tape::backward`].
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// Loads a parameter onto the tape. Repeated loads return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push_unchecked(store.value(id).clone(), Op::Param(id), true);
        self.params.insert(id, v);
        v
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> TensorError {
        TensorError::ShapeMismatch { op, lhs: self.shape(a).to_vec(), rhs: self.shape(b).to_vec() }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.dims(a)?;
        let (k2, n) = self.dims(b)?;
        if k != k2 {
            return Err(self.mismatch("matmul", a, b));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, 1.0, self.value(a).data(), (k, 1), self.value(b).data(), (n, 1), 0.0, &mut out);
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ` for `a: [m,k]`, `b: [n,k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.dims(a)?;
        let (n, k2) = self.dims(b)?;
        if k != k2 {
            return Err(self.mismatch("matmul_nt", a, b));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, 1.0, self.value(a).data(), (k, 1), self.value(b).data(), (1, k), 0.0, &mut out);
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(&[m, n], out)?, Op::MatMulNt(a, b), rg)
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch(name, a, b));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(self.shape(a), data)?;
        let rg = self.rg(a) || self.rg(b);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a `[1,n]` row to every row of `a: [m,n]`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (m, n) = self.dims(a)?;
        if self.dims(row)? != (1, n) {
            return Err(self.mismatch("add_row", a, row));
        }
        let r = self.value(row).data();
        let mut data = self.value(a).data().to_vec();
        for chunk in data.chunks_mut(n) {
            for (x, y) in chunk.iter_mut().zip(r) {
                *x += y;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        self.push(Tensor::new(&[m, n], data)?, Op::AddRow(a, row), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, TensorError> {
        let value = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    /// Elementwise product with a constant of the same size.
    pub fn mul_const(&mut self, a: Var, c: Vec<f64>) -> Result<Var, TensorError> {
        if c.len() != self.value(a).len() {
            return Err(TensorError::DataLength { shape: self.shape(a).to_vec(), len: c.len() });
        }
        let data = self.value(a).data().iter().zip(&c).map(|(x, y)| x * y).collect();
        let value = Tensor::new(self.shape(a), data)?;
        let rg = self.rg(a);
        self.push(value, Op::MulConst(a, c), rg)
    }

    /// Multiplies row `r` of `a` by the constant `w[r]`.
    pub fn scale_rows(&mut self, a: Var, w: Vec<f64>) -> Result<Var, TensorError> {
        let (m, n) = self.dims(a)?;
        if w.len() != m {
            return Err(TensorError::DataLength { shape: vec![m], len: w.len() });
        }
        let mut data = self.value(a).data().to_vec();
        for (chunk, &s) in data.chunks_mut(n).zip(&w) {
            chunk.iter_mut().for_each(|x| *x *= s);
        }
        let rg = self.rg(a);
        self.push(Tensor::new(&[m, n], data)?, Op::ScaleRows(a, w), rg)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(f64::exp);
        let rg = self.rg(a);
        self.push(value, Op::Exp(a), rg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(|x| gelu_and_grad(x).0);
        let rg = self.rg(a);
        self.push(value, Op::Gelu(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    /// Row-wise softmax, stabilized by subtracting each row's maximum.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let (m, n) = self.dims(a)?;
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(n) {
            softmax_in_place(row);
        }
        let rg = self.rg(a);
        self.push(Tensor::new(&[m, n], data)?, Op::SoftmaxRows(a), rg)
    }

    /// Row-wise layer normalization with affine `gamma`, `beta` of shape `[1,n]`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, TensorError> {
        let (m, n) = self.dims(x)?;
        if self.dims(gamma)? != (1, n) {
            return Err(self.mismatch("layer_norm", x, gamma));
        }
        if self.dims(beta)? != (1, n) {
            return Err(self.mismatch("layer_norm", x, beta));
        }
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = self.value(x).data().to_vec();
        let mut rstd = Vec::with_capacity(m);
        let mut out = vec![0.0; m * n];
        for (row, orow) in xhat.chunks_mut(n).zip(out.chunks_mut(n)) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            for ((h, o), (gi, bi)) in row.iter_mut().zip(orow.iter_mut()).zip(g.iter().zip(b)) {
                *h = (*h - mean) * rs;
                *o = *h * gi + bi;
            }
            rstd.push(rs);
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(Tensor::new(&[m, n], out)?, Op::LayerNorm { x, gamma, beta, xhat, rstd }, rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts.first().ok_or(TensorError::Empty("concat_rows"))?;
        let n = self.dims(first)?.1;
        let mut data = Vec::new();
        let mut m = 0;
        for &p in parts {
            let (pm, pn) = self.dims(p)?;
            if pn != n {
                return Err(self.mismatch("concat_rows", first, p));
            }
            m += pm;
            data.extend_from_slice(self.value(p).data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Tensor::new(&[m, n], data)?, Op::ConcatRows(parts.to_vec()), rg)
    }

    /// Concatenates along the column (channel) axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts.first().ok_or(TensorError::Empty("concat_cols"))?;
        let m = self.dims(first)?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.dims(p)?;
            if pm != m {
                return Err(self.mismatch("concat_cols", first, p));
            }
            widths.push(pn);
        }
        let n: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Tensor::new(&[m, n], data)?, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let (m, n) = self.dims(x)?;
        if len == 0 || start + len > m {
            return Err(TensorError::SliceOutOfRange { start, len, rows: m });
        }
        let data = self.value(x).data()[start * n..(start + len) * n].to_vec();
        let rg = self.rg(x);
        self.push(Tensor::new(&[len, n], data)?, Op::SliceRows { x, start }, rg)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = self.value(a);
        let s = v.sum() / v.len() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Mean squared difference between `a` and `b`, as a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        self.mean(sq)
    }

    /// Back-propagates from the scalar `loss`.
    ///
    /// Parameter gradients are added to `store` (they accumulate across
    /// calls until [`ParamStore::zero_grads`]). The returned [`Gradients`]
    /// also expose gradients of inputs created with [`Tape::input`].
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients, TensorError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            if let Op::Param(id) = node.op {
                store.accumulate_grad(id, &g);
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect() })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<(), TensorError> {
        let out = node.value.data();
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a)?;
                let n = self.dims(*b)?.1;
                if self.rg(*a) {
                    let bv = self.value(*b).data();
                    // dA = dC · Bᵀ
                    acc_with(grads, *a, m * k, |ga| gemm(m, n, k, 1.0, g, (n, 1), bv, (1, n), 1.0, ga));
                }
                if self.rg(*b) {
                    let av = self.value(*a).data();
                    // dB = Aᵀ · dC
                    acc_with(grads, *b, k * n, |gb| gemm(k, m, n, 1.0, av, (1, k), g, (n, 1), 1.0, gb));
                }
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = self.dims(*a)?;
                let n = self.dims(*b)?.0;
                if self.rg(*a) {
                    let bv = self.value(*b).data();
                    // dA = dC · B
                    acc_with(grads, *a, m * k, |ga| gemm(m, n, k, 1.0, g, (n, 1), bv, (k, 1), 1.0, ga));
                }
                if self.rg(*b) {
                    let av = self.value(*a).data();
                    // dB = dCᵀ · A
                    acc_with(grads, *b, n * k, |gb| gemm(n, m, k, 1.0, g, (1, n), av, (k, 1), 1.0, gb));
                }
            }
            Op::Add(a, b) => {
                self.acc_elementwise(grads, *a, g, |_, gi| gi);
                self.acc_elementwise(grads, *b, g, |_, gi| gi);
            }
            Op::Sub(a, b) => {
                self.acc_elementwise(grads, *a, g, |_, gi| gi);
                self.acc_elementwise(grads, *b, g, |_, gi| -gi);
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                self.acc_elementwise(grads, *a, g, |i, gi| gi * bv[i]);
                self.acc_elementwise(grads, *b, g, |i, gi| gi * av[i]);
            }
            Op::AddRow(a, row) => {
                self.acc_elementwise(grads, *a, g, |_, gi| gi);
                if self.rg(*row) {
                    let n = self.dims(*row)?.1;
                    acc_with(grads, *row, n, |gr| {
                        for chunk in g.chunks(n) {
                            for (x, y) in gr.iter_mut().zip(chunk) {
                                *x += y;
                            }
                        }
                    });
                }
            }
            Op::Scale(a, s) => self.acc_elementwise(grads, *a, g, |_, gi| gi * s),
            Op::MulConst(a, c) => self.acc_elementwise(grads, *a, g, |i, gi| gi * c[i]),
            Op::ScaleRows(a, w) => {
                let n = self.dims(*a)?.1;
                self.acc_elementwise(grads, *a, g, |i, gi| gi * w[i / n]);
            }
            Op::Exp(a) => self.acc_elementwise(grads, *a, g, |i, gi| gi * out[i]),
            Op::Gelu(a) => {
                let av = self.value(*a).data();
                self.acc_elementwise(grads, *a, g, |i, gi| gi * gelu_and_grad(av[i]).1);
            }
            Op::Relu(a) => {
                let av = self.value(*a).data();
                self.acc_elementwise(grads, *a, g, |i, gi| if av[i] > 0.0 { gi } else { 0.0 });
            }
            Op::SoftmaxRows(a) => {
                if self.rg(*a) {
                    let (m, n) = self.dims(*a)?;
                    acc_with(grads, *a, m * n, |ga| {
                        for ((gr, yr), dst) in g.chunks(n).zip(out.chunks(n)).zip(ga.chunks_mut(n)) {
                            let dot: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                            for ((d, gi), yi) in dst.iter_mut().zip(gr).zip(yr) {
                                *d += yi * (gi - dot);
                            }
                        }
                    });
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let (m, n) = self.dims(*x)?;
                let gv = self.value(*gamma).data();
                if self.rg(*x) {
                    acc_with(grads, *x, m * n, |gx| {
                        let mut dxhat = vec![0.0; n];
                        for r in 0..m {
                            let gr = &g[r * n..(r + 1) * n];
                            let hr = &xhat[r * n..(r + 1) * n];
                            for j in 0..n {
                                dxhat[j] = gr[j] * gv[j];
                            }
                            let mean_d = dxhat.iter().sum::<f64>() / n as f64;
                            let mean_dh = dxhat.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                            let dst = &mut gx[r * n..(r + 1) * n];
                            for j in 0..n {
                                dst[j] += rstd[r] * (dxhat[j] - mean_d - hr[j] * mean_dh);
                            }
                        }
                    });
                }
                if self.rg(*gamma) {
                    acc_with(grads, *gamma, n, |gg| {
                        for (gr, hr) in g.chunks(n).zip(xhat.chunks(n)) {
                            for j in 0..n {
                                gg[j] += gr[j] * hr[j];
                            }
                        }
                    });
                }
                if self.rg(*beta) {
                    acc_with(grads, *beta, n, |gb| {
                        for gr in g.chunks(n) {
                            for j in 0..n {
                                gb[j] += gr[j];
                            }
                        }
                    });
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.rg(p) {
                        acc_with(grads, p, len, |gp| {
                            for (d, s) in gp.iter_mut().zip(&g[offset..offset + len]) {
                                *d += s;
                            }
                        });
                    }
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let n = node.value.cols();
                let mut col = 0;
                for &p in parts {
                    let (pm, pn) = self.dims(p)?;
                    if self.rg(p) {
                        acc_with(grads, p, pm * pn, |gp| {
                            for r in 0..pm {
                                for c in 0..pn {
                                    gp[r * pn + c] += g[r * n + col + c];
                                }
                            }
                        });
                    }
                    col += pn;
                }
            }
            Op::SliceRows { x, start } => {
                if self.rg(*x) {
                    let (m, n) = self.dims(*x)?;
                    let off = start * n;
                    acc_with(grads, *x, m * n, |gx| {
                        for (d, s) in gx[off..off + g.len()].iter_mut().zip(g) {
                            *d += s;
                        }
                    });
                }
            }
            Op::Sum(a) => {
                let g0 = g[0];
                self.acc_elementwise(grads, *a, g, |_, _| g0);
            }
            Op::Mean(a) => {
                let scale = g[0] / self.value(*a).len() as f64;
                self.acc_elementwise(grads, *a, g, |_, _| scale);
            }
        }
        Ok(())
    }

    /// Accumulates `f(i, g[i])` into the gradient of `a`. For reductions
    /// `g` is shorter than `a`, so `f` must not index it.
    fn acc_elementwise(&self, grads: &mut [Option<Vec<f64>>], a: Var, g: &[f64], f: impl Fn(usize, f64) -> f64) {
        if !self.rg(a) {
            return;
        }
        let len = self.value(a).len();
        acc_with(grads, a, len, |ga| {
            if g.len() == len {
                for (i, (d, &gi)) in ga.iter_mut().zip(g).enumerate() {
                    *d += f(i, gi);
                }
            } else {
                for (i, d) in ga.iter_mut().enumerate() {
                    *d += f(i, 0.0);
                }
            }
        });
    }
}

fn acc_with(grads: &mut [Option<Vec<f64>>], v: Var, len: usize, f: impl FnOnce(&mut [f64])) {
    let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
    f(slot);
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn gelu_and_grad(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const A: f64 = 0.044_715;
    let inner = C * (x + A * x * x * x);
    let th = inner.tanh();
    let y = 0.5 * x * (1.0 + th);
    let dy = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * C * (1.0 + 3.0 * A * x * x);
    (y, dy)
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Param(_) => "param",
        Op::MatMul(..) => "matmul",
        Op::MatMulNt(..) => "matmul_nt",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::AddRow(..) => "add_row",
        Op::Scale(..) => "scale",
        Op::MulConst(..) => "mul_const",
        Op::ScaleRows(..) => "scale_rows",
        Op::Exp(..) => "exp",
        Op::Gelu(..) => "gelu",
        Op::Relu(..) => "relu",
        Op::SoftmaxRows(..) => "softmax_rows",
        Op::LayerNorm { .. } => "layer_norm",
        Op::ConcatRows(..) => "concat_rows",
        Op::ConcatCols(..) => "concat_cols",
        Op::SliceRows { .. } => "slice_rows",
        Op::Sum(..) => "sum",
        Op::Mean(..) => "mean",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::gradcheck::{finite_diff_check, numeric_gradients, relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let i = tape.constant(Tensor::identity(2));
        let a = Tensor::from_rows(&[vec![1.5, -2.0], vec![0.25, 4.0]]).unwrap();
        let av = tape.constant(a.clone());
        let out = tape.matmul(i, av).unwrap();
        assert_eq!(tape.value(out), &a);
    }

    #[test]
    fn matmul_hand_arithmetic() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let b = tape.constant(Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap());
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, TensorError::ShapeMismatch { op: "matmul", .. }));
    }

    #[test]
    fn matmul_gradient_is_ones_times_b_transpose() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let a = store.randn("a", &[3, 4], 1.0, &mut r).unwrap();
        let b = store.randn("b", &[4, 2], 1.0, &mut r).unwrap();
        let mut tape = Tape::new();
        let (av, bv) = (tape.param(&store, a), tape.param(&store, b));
        let c = tape.matmul(av, bv).unwrap();
        let loss = tape.sum(c).unwrap();
        tape.backward(loss, &mut store).unwrap();
        let expected = Tensor::ones(&[3, 2]).matmul(&store.value(b).transpose().unwrap()).unwrap();
        assert!(store.grad(a).max_abs_diff(&expected) < 1e-12);

        let numeric = numeric_gradients(&store, 1e-5, |tape, s| {
            let (av, bv) = (tape.param(s, a), tape.param(s, b));
            let c = tape.matmul(av, bv)?;
            tape.sum(c)
        })
        .unwrap();
        assert!(relative_error(store.grad(a), &numeric[0]) < 1e-5);
        assert!(relative_error(store.grad(b), &numeric[1]) < 1e-5);
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap());
        let y = tape.softmax_rows(x).unwrap();
        for &v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let x = tape.constant(Tensor::from_rows(&[vec![1000.0, 0.0]]).unwrap());
        let y = tape.softmax_rows(x).unwrap();
        let d = tape.value(y).data();
        assert_eq!(d[0], 1.0);
        assert!(d[1] >= 0.0 && d[1] < 1e-300);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_jacobian_matches() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let x = store.randn("x", &[4, 5], 2.0, &mut r).unwrap();
        let w = Tensor::randn(&[4, 5], 1.0, &mut r);
        let f = |tape: &mut Tape, s: &ParamStore| {
            let xv = tape.param(s, x);
            let y = tape.softmax_rows(xv)?;
            let y = tape.mul_const(y, w.data().to_vec())?;
            tape.sum(y)
        };
        let mut tape = Tape::new();
        let xv = tape.param(&store, x);
        let y = tape.softmax_rows(xv).unwrap();
        for r in 0..4 {
            let s: f64 = tape.value(y).row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        let err = finite_diff_check(&mut store, 1e-5, f).unwrap();
        assert!(err < 1e-6, "softmax jacobian rel err {err}");
    }

    #[test]
    fn backward_sum_and_square() {
        let mut store = ParamStore::new();
        let p = store.register("p", Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap()).unwrap();
        let mut tape = Tape::new();
        let pv = tape.param(&store, p);
        let loss = tape.sum(pv).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(p).data(), &[1.0, 1.0, 1.0]);

        store.zero_grads();
        let mut tape = Tape::new();
        let pv = tape.param(&store, p);
        let sq = tape.mul(pv, pv).unwrap();
        let loss = tape.sum(sq).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(p).data(), &[2.0, -4.0, 1.0]);

        // a second backward accumulates
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(p).data(), &[4.0, -8.0, 2.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut store = ParamStore::new();
        let p = store.zeros("p", &[2, 2]).unwrap();
        let mut tape = Tape::new();
        let pv = tape.param(&store, p);
        assert!(matches!(tape.backward(pv, &mut store), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn every_op_passes_gradient_check() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let a = store.randn("a", &[3, 4], 1.0, &mut r).unwrap();
        let b = store.randn("b", &[4, 4], 1.0, &mut r).unwrap();
        let c = store.randn("c", &[3, 4], 1.0, &mut r).unwrap();
        let row = store.randn("row", &[1, 4], 1.0, &mut r).unwrap();
        let gamma = store.randn("gamma", &[1, 4], 1.0, &mut r).unwrap();
        let beta = store.randn("beta", &[1, 4], 1.0, &mut r).unwrap();
        let mask: Vec<f64> = (0..12).map(|i| (i % 3) as f64 * 0.5).collect();
        let err = finite_diff_check(&mut store, 1e-5, |t, s| {
            let (a, b, c) = (t.param(s, a), t.param(s, b), t.param(s, c));
            let (row, gamma, beta) = (t.param(s, row), t.param(s, gamma), t.param(s, beta));
            let ab = t.matmul(a, b)?;
            let nt = t.matmul_nt(ab, c)?; // [3,3]
            let sm = t.softmax_rows(nt)?;
            let x = t.matmul(sm, c)?; // [3,4]
            let x = t.add_row(x, row)?;
            let x = t.layer_norm(x, gamma, beta)?;
            let x = t.gelu(x)?;
            let y = t.mul(x, a)?;
            let y = t.sub(y, c)?;
            let y = t.scale(y, 0.7)?;
            let y = t.mul_const(y, mask.clone())?;
            let y = t.scale_rows(y, vec![1.0, -2.0, 0.5])?;
            let e = t.scale(y, 0.1)?;
            let e = t.exp(e)?;
            let top = t.slice_rows(e, 0, 2)?;
            let rows = t.concat_rows(&[top, a])?;
            let cols = t.concat_cols(&[rows, rows])?;
            let sq = t.mul(cols, cols)?;
            let m = t.mean(sq)?;
            let s = t.sum(x)?;
            let both = t.concat_rows(&[m, s])?;
            t.sum(both)
        })
        .unwrap();
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn matmul_is_associative() {
        let mut r = rng();
        for _ in 0..20 {
            let a = Tensor::randn(&[3, 4], 1.0, &mut r);
            let b = Tensor::randn(&[4, 5], 1.0, &mut r);
            let c = Tensor::randn(&[5, 2], 1.0, &mut r);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            assert!(left.max_abs_diff(&right) < 1e-9);
        }
    }

    #[test]
    fn input_gradients_are_reported() {
        let mut store = ParamStore::new();
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(&[2], vec![3.0, -1.0]).unwrap());
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq).unwrap();
        let grads = tape.backward(loss, &mut store).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[6.0, -2.0]);
    }

    #[cfg(debug_assertions)]
    #[test]
    fn non_finite_results_are_errors_in_debug() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(1000.0));
        assert!(matches!(tape.exp(x), Err(TensorError::NonFinite("exp"))));
    }
}
