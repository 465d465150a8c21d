//! Reverse-mode differentiation over a linear tape.
//!
//! Nodes are appended in evaluation order, so every node's inputs precede it
//! and [`Tape::backward`] can visit the tape once from the end. Parameters are
//! borrowed from a [`ParamSet`] rather than copied; their gradients come back
//! in a [`Gradients`] value that the caller folds into the set.

use std::collections::HashMap;

use rand::{Rng, RngCore};

use super::kernels::{self, matmul_acc, matmul_at_acc, matmul_bt_acc};
use super::{Float, ParamId, ParamSet, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<F> {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    Relu(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<F>,
        rstd: Vec<F>,
    },
    Dropout {
        x: Var,
        mask: Vec<F>,
    },
    MaxPoolRows {
        x: Var,
        argmax: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SumAll(Var),
    GatherRel {
        x: Var,
        labels: Vec<u8>,
    },
    ScatterRel {
        a: Var,
        labels: Vec<u8>,
    },
    AddRowsAt {
        base: Var,
        row: Var,
        positions: Vec<usize>,
    },
    CrossEntropy {
        p: Var,
        target: usize,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<F>,
    },
}

struct Node<F> {
    op: Op<F>,
    /// `None` only for parameter leaves, whose value lives in the `ParamSet`.
    value: Option<Tensor<F>>,
    needs_grad: bool,
}

pub struct Tape<'p, F: Float> {
    params: Option<&'p ParamSet<F>>,
    nodes: Vec<Node<F>>,
    param_vars: HashMap<ParamId, Var>,
}

/// Result of [`Tape::backward`]: gradients for parameters and for input
/// leaves created with `requires_grad`.
#[derive(Debug, Default)]
pub struct Gradients<F> {
    params: Vec<Option<Vec<F>>>,
    inputs: HashMap<Var, Vec<F>>,
}

impl<F: Float> Gradients<F> {
    pub fn param(&self, id: ParamId) -> Option<&[F]> {
        self.params.get(id.index()).and_then(|g| g.as_deref())
    }

    pub fn wrt(&self, v: Var) -> Option<&[F]> {
        self.inputs.get(&v).map(|g| g.as_slice())
    }

    /// Adds `other` into `self` element-wise.
    pub fn merge(&mut self, other: Gradients<F>) {
        if self.params.len() < other.params.len() {
            self.params.resize(other.params.len(), None);
        }
        for (dst, src) in self.params.iter_mut().zip(other.params) {
            match (dst.as_mut(), src) {
                (Some(d), Some(s)) => d.iter_mut().zip(&s).for_each(|(a, &b)| *a += b),
                (None, Some(s)) => *dst = Some(s),
                _ => {}
            }
        }
    }
}

impl<F: Float> Default for Tape<'_, F> {
    fn default() -> Self {
        Tape {
            params: None,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }
}

fn dims(t: &Tensor<impl Float>) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl<'p, F: Float> Tape<'p, F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_params(params: &'p ParamSet<F>) -> Self {
        Tape {
            params: Some(params),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<F>, value: Tensor<F>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            op,
            value: Some(value),
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.expect("parameter tape").get(*id),
            (None, _) => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// Records a leaf. It receives a gradient iff `t.requires_grad()`.
    pub fn input(&mut self, t: Tensor<F>) -> Var {
        let needs_grad = t.requires_grad();
        self.nodes.push(Node {
            op: Op::Input,
            value: Some(t),
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, mut t: Tensor<F>) -> Var {
        t.set_requires_grad(false);
        self.input(t)
    }

    /// Leaf bound to a parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        assert!(self.params.is_some(), "tape was created without parameters");
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ((m, k), (k2, n)) = (dims(ta), dims(tb));
        if k != k2 {
            return Err(Error::dim("matmul", ta.shape(), tb.shape()));
        }
        let out = kernels::matmul(ta.data(), tb.data(), m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(Op::MatMul(a, b), t, &[a, b]))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ((m, k), (n, k2)) = (dims(ta), dims(tb));
        if k != k2 {
            return Err(Error::dim("matmul_bt", ta.shape(), tb.shape()));
        }
        let out = kernels::matmul_bt(ta.data(), tb.data(), m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(Op::MatMulBt(a, b), t, &[a, b]))
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(F, F) -> F) -> Result<Tensor<F>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim(op, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), t, &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), t, &[a, b]))
    }

    /// Adds the vector `row` to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(row));
        let cols = tx.cols();
        if tb.numel() != cols {
            return Err(Error::dim("add_row", tx.shape(), tb.shape()));
        }
        let mut data = tx.data().to_vec();
        for r in data.chunks_mut(cols) {
            r.iter_mut().zip(tb.data()).for_each(|(a, &b)| *a += b);
        }
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(Op::AddRow(x, row), t, &[x, row]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let f = F::of(factor);
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| v * f).collect();
        let t = Tensor::new(tx.shape().to_vec(), data).unwrap();
        self.push(Op::Scale(x, f), t, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| v.max(F::zero())).collect();
        let t = Tensor::new(tx.shape().to_vec(), data).unwrap();
        self.push(Op::Relu(x), t, &[x])
    }

    /// Softmax along the last axis. Entries with `mask == true` get weight
    /// zero; a row with every entry masked is a data error.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let tx = self.value(x);
        let (r, c) = dims(tx);
        if let Some(m) = mask {
            if m.len() != r * c {
                return Err(Error::dim("softmax mask", tx.shape(), &[m.len()]));
            }
        }
        let out = kernels::softmax_rows(tx.data(), r, c, mask)
            .ok_or_else(|| Error::Data("attention row has every position masked".into()))?;
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push(Op::SoftmaxRows(x), t, &[x]))
    }

    /// Normalises each row to zero mean and unit variance, then applies
    /// `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let (r, c) = dims(tx);
        if tg.numel() != c || tb.numel() != c {
            return Err(Error::dim("layer_norm", tx.shape(), tg.shape()));
        }
        let eps = F::of(eps);
        let inv_c = F::of(1.0 / c as f64);
        let mut xhat = vec![F::zero(); r * c];
        let mut rstd = vec![F::zero(); r];
        let mut out = vec![F::zero(); r * c];
        for i in 0..r {
            let row = &tx.data()[i * c..(i + 1) * c];
            let mean = row.iter().copied().sum::<F>() * inv_c;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv_c;
            let rs = F::one() / (var + eps).sqrt();
            rstd[i] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[i * c + j] = h;
                out[i * c + j] = h * tg.data()[j] + tb.data()[j];
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            t,
            &[x, gain, bias],
        ))
    }

    /// Inverted dropout. With `rng == None` (evaluation) this is the
    /// identity and returns `x` itself.
    pub fn dropout(&mut self, x: Var, rate: f64, rng: Option<&mut dyn RngCore>) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        let rng = match rng {
            Some(rng) if rate > 0.0 => rng,
            _ => return Ok(x),
        };
        let keep = F::of(1.0 / (1.0 - rate));
        let tx = self.value(x);
        let mask: Vec<F> = (0..tx.numel())
            .map(|_| if rng.gen::<f64>() < rate { F::zero() } else { keep })
            .collect();
        let data = tx.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(Op::Dropout { x, mask }, t, &[x]))
    }

    /// Column-wise maximum over rows: `[n×d] → [1×d]`.
    pub fn max_pool_rows(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let (r, c) = dims(tx);
        if r == 0 {
            return Err(Error::dim("max_pool_rows", tx.shape(), &[1, c]));
        }
        let mut argmax = vec![0usize; c];
        let mut out = tx.data()[..c].to_vec();
        for i in 1..r {
            for j in 0..c {
                let v = tx.data()[i * c + j];
                if v > out[j] {
                    out[j] = v;
                    argmax[j] = i;
                }
            }
        }
        let t = Tensor::new(vec![1, c], out)?;
        Ok(self.push(Op::MaxPoolRows { x, argmax }, t, &[x]))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        let (r, c) = dims(tx);
        if start + len > c {
            return Err(Error::dim("slice_cols", tx.shape(), &[start, len]));
        }
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&tx.data()[i * c + start..i * c + start + len]);
        }
        let t = Tensor::new(vec![r, len], out)?;
        Ok(self.push(Op::SliceCols { x, start }, t, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let r = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != r {
                return Err(Error::dim("concat_cols", self.value(parts[0]).shape(), t.shape()));
            }
            total += t.cols();
        }
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                let t = self.value(p);
                let c = t.cols();
                out.extend_from_slice(&t.data()[i * c..(i + 1) * c]);
            }
        }
        let t = Tensor::new(vec![r, total], out)?;
        Ok(self.push(Op::ConcatCols(parts.to_vec()), t, parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = self.value(parts[0]).cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != c {
                return Err(Error::dim("concat_rows", self.value(parts[0]).shape(), t.shape()));
            }
            rows += t.rows();
            out.extend_from_slice(t.data());
        }
        let t = Tensor::new(vec![rows, c], out)?;
        Ok(self.push(Op::ConcatRows(parts.to_vec()), t, parts))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<F>();
        self.push(Op::SumAll(x), Tensor::scalar(s), &[x])
    }

    /// `out[i,j] = x[i, labels[i·n+j]]` for `x: [n×kinds]`, `labels: n×n`.
    pub fn gather_rel(&mut self, x: Var, labels: &[u8]) -> Result<Var> {
        let tx = self.value(x);
        let (n, kinds) = dims(tx);
        if labels.len() != n * n || labels.iter().any(|&l| l as usize >= kinds) {
            return Err(Error::dim("gather_rel", tx.shape(), &[labels.len()]));
        }
        let mut out = vec![F::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = tx.data()[i * kinds + labels[i * n + j] as usize];
            }
        }
        let t = Tensor::new(vec![n, n], out)?;
        Ok(self.push(
            Op::GatherRel {
                x,
                labels: labels.to_vec(),
            },
            t,
            &[x],
        ))
    }

    /// `out[i,r] = Σ_{j : labels[i·n+j] = r} a[i,j]`, giving `[n×kinds]`.
    pub fn scatter_rel(&mut self, a: Var, labels: &[u8], kinds: usize) -> Result<Var> {
        let ta = self.value(a);
        let (n, n2) = dims(ta);
        if n != n2 || labels.len() != n * n || labels.iter().any(|&l| l as usize >= kinds) {
            return Err(Error::dim("scatter_rel", ta.shape(), &[labels.len()]));
        }
        let mut out = vec![F::zero(); n * kinds];
        for i in 0..n {
            for j in 0..n {
                out[i * kinds + labels[i * n + j] as usize] += ta.data()[i * n + j];
            }
        }
        let t = Tensor::new(vec![n, kinds], out)?;
        Ok(self.push(
            Op::ScatterRel {
                a,
                labels: labels.to_vec(),
            },
            t,
            &[a],
        ))
    }

    /// Adds the vector `row` to the rows of `base` listed in `positions`.
    pub fn add_rows_at(&mut self, base: Var, row: Var, positions: &[usize]) -> Result<Var> {
        let (tb, tr) = (self.value(base), self.value(row));
        let (r, c) = dims(tb);
        if tr.numel() != c || positions.iter().any(|&p| p >= r) {
            return Err(Error::dim("add_rows_at", tb.shape(), tr.shape()));
        }
        let mut out = tb.data().to_vec();
        for &p in positions {
            out[p * c..(p + 1) * c]
                .iter_mut()
                .zip(tr.data())
                .for_each(|(a, &b)| *a += b);
        }
        let t = Tensor::new(tb.shape().to_vec(), out)?;
        Ok(self.push(
            Op::AddRowsAt {
                base,
                row,
                positions: positions.to_vec(),
            },
            t,
            &[base, row],
        ))
    }

    /// `-ln p[target]` for a probability vector `p`.
    pub fn cross_entropy(&mut self, p: Var, target: usize) -> Result<Var> {
        let tp = self.value(p);
        if target >= tp.numel() {
            return Err(Error::Label {
                label: target,
                classes: tp.numel(),
            });
        }
        let pt = tp.data()[target].max(F::min_positive_value());
        Ok(self.push(Op::CrossEntropy { p, target }, Tensor::scalar(-pt.ln()), &[p]))
    }

    /// Fused `-ln softmax(logits)[target]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let tl = self.value(logits);
        if target >= tl.numel() {
            return Err(Error::Label {
                label: target,
                classes: tl.numel(),
            });
        }
        let probs = kernels::softmax(tl.data());
        let max = tl.data().iter().copied().fold(F::neg_infinity(), F::max);
        let lse = max + tl.data().iter().map(|&v| (v - max).exp()).sum::<F>().ln();
        let loss = lse - tl.data()[target];
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs,
            },
            Tensor::scalar(loss),
            &[logits],
        ))
    }

    /// Back-propagates from the scalar `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<F>> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![F::one()]);
        let mut out = Gradients {
            params: vec![None; self.params.map_or(0, |p| p.len())],
            inputs: HashMap::new(),
        };

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            match node.op {
                Op::Param(id) => out.params[id.index()] = Some(g),
                Op::Input => {
                    out.inputs.insert(Var(i), g);
                }
                _ => {}
            }
        }
        Ok(out)
    }

    fn backprop_node(&self, i: usize, g: &[F], grads: &mut [Option<Vec<F>>]) {
        let needs = |v: Var| self.nodes[v.0].needs_grad;
        // Gradient buffer for `v`, allocated on first use.
        fn buf<'a, F: Float>(
            tape: &Tape<'_, F>,
            grads: &'a mut [Option<Vec<F>>],
            v: Var,
        ) -> &'a mut Vec<F> {
            let numel = tape.value(v).numel();
            grads[v.0].get_or_insert_with(|| vec![F::zero(); numel])
        }
        let add_into = |grads: &mut [Option<Vec<F>>], v: Var, f: &dyn Fn(usize) -> F| {
            if needs(v) {
                buf(self, grads, v).iter_mut().enumerate().for_each(|(k, d)| *d += f(k));
            }
        };

        let out_val = self.nodes[i].value.as_ref();
        match &self.nodes[i].op {
            Op::Input | Op::Param(_) => {}
            &Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let ((m, k), (_, n)) = (dims(ta), dims(tb));
                if needs(a) {
                    matmul_bt_acc(g, tb.data(), buf(self, grads, a), m, n, k);
                }
                if needs(b) {
                    matmul_at_acc(ta.data(), g, buf(self, grads, b), m, k, n);
                }
            }
            &Op::MatMulBt(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let ((m, k), (n, _)) = (dims(ta), dims(tb));
                if needs(a) {
                    matmul_acc(g, tb.data(), buf(self, grads, a), m, n, k);
                }
                if needs(b) {
                    matmul_at_acc(g, ta.data(), buf(self, grads, b), m, n, k);
                }
            }
            &Op::Add(a, b) => {
                add_into(grads, a, &|k| g[k]);
                add_into(grads, b, &|k| g[k]);
            }
            &Op::AddRow(x, row) => {
                add_into(grads, x, &|k| g[k]);
                if needs(row) {
                    let c = self.value(x).cols();
                    let d = buf(self, grads, row);
                    for r in g.chunks(c) {
                        d.iter_mut().zip(r).for_each(|(a, &b)| *a += b);
                    }
                }
            }
            &Op::Mul(a, b) => {
                let (ta, tb) = (self.value(a).data(), self.value(b).data());
                add_into(grads, a, &|k| g[k] * tb[k]);
                add_into(grads, b, &|k| g[k] * ta[k]);
            }
            &Op::Scale(x, f) => add_into(grads, x, &|k| g[k] * f),
            &Op::Relu(x) => {
                let y = out_val.unwrap().data();
                add_into(grads, x, &|k| if y[k] > F::zero() { g[k] } else { F::zero() });
            }
            &Op::SoftmaxRows(x) => {
                let y = out_val.unwrap();
                let (r, c) = dims(y);
                let y = y.data();
                let mut dx = vec![F::zero(); r * c];
                for row in 0..r {
                    let s = row * c..(row + 1) * c;
                    let dot: F = y[s.clone()].iter().zip(&g[s.clone()]).map(|(&a, &b)| a * b).sum();
                    for k in s {
                        dx[k] = y[k] * (g[k] - dot);
                    }
                }
                add_into(grads, x, &|k| dx[k]);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let (x, gain, bias) = (*x, *gain, *bias);
                let gv = self.value(gain).data();
                let (r, c) = dims(self.value(x));
                if needs(x) {
                    let inv_c = F::of(1.0 / c as f64);
                    let d = buf(self, grads, x);
                    let mut dxhat = vec![F::zero(); c];
                    for row in 0..r {
                        let s = row * c;
                        let mut sum_d = F::zero();
                        let mut sum_dx = F::zero();
                        for j in 0..c {
                            dxhat[j] = g[s + j] * gv[j];
                            sum_d += dxhat[j];
                            sum_dx += dxhat[j] * xhat[s + j];
                        }
                        for j in 0..c {
                            d[s + j] += rstd[row] * (dxhat[j] - inv_c * sum_d - xhat[s + j] * inv_c * sum_dx);
                        }
                    }
                }
                if needs(gain) {
                    let d = buf(self, grads, gain);
                    for (k, &gk) in g.iter().enumerate() {
                        d[k % c] += gk * xhat[k];
                    }
                }
                if needs(bias) {
                    let d = buf(self, grads, bias);
                    for (k, &gk) in g.iter().enumerate() {
                        d[k % c] += gk;
                    }
                }
            }
            Op::Dropout { x, mask } => add_into(grads, *x, &|k| g[k] * mask[k]),
            Op::MaxPoolRows { x, argmax } => {
                if needs(*x) {
                    let c = argmax.len();
                    let d = buf(self, grads, *x);
                    for (j, &r) in argmax.iter().enumerate() {
                        d[r * c + j] += g[j];
                    }
                }
            }
            &Op::SliceCols { x, start } => {
                if needs(x) {
                    let c = self.value(x).cols();
                    let len = out_val.unwrap().cols();
                    let d = buf(self, grads, x);
                    for (row, gr) in g.chunks(len).enumerate() {
                        for (j, &v) in gr.iter().enumerate() {
                            d[row * c + start + j] += v;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = out_val.unwrap().cols();
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    if needs(p) {
                        let d = buf(self, grads, p);
                        for (row, gr) in g.chunks(total).enumerate() {
                            for j in 0..c {
                                d[row * c + j] += gr[offset + j];
                            }
                        }
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    add_into(grads, p, &|k| g[offset + k]);
                    offset += n;
                }
            }
            &Op::SumAll(x) => add_into(grads, x, &|_| g[0]),
            Op::GatherRel { x, labels } => {
                if needs(*x) {
                    let kinds = self.value(*x).cols();
                    let n = out_val.unwrap().cols();
                    let d = buf(self, grads, *x);
                    for (k, &l) in labels.iter().enumerate() {
                        d[(k / n) * kinds + l as usize] += g[k];
                    }
                }
            }
            Op::ScatterRel { a, labels } => {
                let kinds = out_val.unwrap().cols();
                let n = self.value(*a).cols();
                add_into(grads, *a, &|k| g[(k / n) * kinds + labels[k] as usize]);
            }
            Op::AddRowsAt { base, row, positions } => {
                add_into(grads, *base, &|k| g[k]);
                if needs(*row) {
                    let c = self.value(*row).numel();
                    let d = buf(self, grads, *row);
                    for &p in positions {
                        d.iter_mut().zip(&g[p * c..(p + 1) * c]).for_each(|(a, &b)| *a += b);
                    }
                }
            }
            &Op::CrossEntropy { p, target } => {
                let pt = self.value(p).data()[target].max(F::min_positive_value());
                add_into(grads, p, &|k| if k == target { -g[0] / pt } else { F::zero() });
            }
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs,
            } => {
                let t = *target;
                add_into(grads, *logits, &|k| {
                    g[0] * (probs[k] - if k == t { F::one() } else { F::zero() })
                });
            }
        }
    }
}
