//! Attention building blocks recorded on a [`Tape`].
//!
//! Structure-aware attention adds a learned relation vector to both sides of
//! the usual computation: the key side contributes `q_i · aK[r_ij]` to the
//! logit and the value side adds `aV[r_ij]` to each value, where `r_ij` is
//! the relation label between posts `i` and `j`.

use rand::{Rng, RngCore};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::kernels::sinusoid;
use crate::tensor::{Float, ParamId, ParamSet, Tape, Var};
use crate::thread::{Relation, TIME_BINS};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Relation lookup tables, `[5 × d_k]` each, indexed by [`Relation`].
#[derive(Clone, Copy, Debug)]
pub struct RelationEmbeddings {
    pub key: ParamId,
    pub value: ParamId,
}

impl RelationEmbeddings {
    pub fn new<F: Float>(params: &mut ParamSet<F>, d_k: usize, rng: &mut impl Rng) -> Self {
        RelationEmbeddings {
            key: params.add_uniform("rel.key", &[Relation::COUNT, d_k], 0.1, rng),
            value: params.add_uniform("rel.value", &[Relation::COUNT, d_k], 0.1, rng),
        }
    }
}

/// Relation inputs for one attention call: `n×n` label indices plus the
/// tape nodes of the two tables.
#[derive(Clone, Copy)]
pub struct RelInput<'a> {
    pub labels: &'a [u8],
    pub key: Var,
    pub value: Var,
}

fn expand_key_mask(key_mask: Option<&[bool]>, n_queries: usize) -> Option<Vec<bool>> {
    key_mask.map(|m| (0..n_queries).flat_map(|_| m.iter().copied()).collect())
}

/// `A = softmax(Q Kᵀ / √d_k)`, `Z = A V`. `mask` is `[n_q × n_k]`, `true`
/// blocking an entry. Returns `(Z, A)`.
pub fn scaled_dot_attention<F: Float>(
    tape: &mut Tape<'_, F>,
    q: Var,
    k: Var,
    v: Var,
    mask: Option<&[bool]>,
) -> Result<(Var, Var)> {
    attend(tape, q, k, v, mask, None, 0.0, None)
}

/// Attention with relation terms on both logits and values.
pub fn structure_aware_attention<F: Float>(
    tape: &mut Tape<'_, F>,
    q: Var,
    k: Var,
    v: Var,
    rel: RelInput<'_>,
    mask: Option<&[bool]>,
) -> Result<(Var, Var)> {
    attend(tape, q, k, v, mask, Some(rel), 0.0, None)
}

/// Shared core. Dropout, when active, applies to the attention weights
/// before they mix the values; the returned `A` is the pre-dropout matrix.
#[allow(clippy::too_many_arguments)]
fn attend<F: Float>(
    tape: &mut Tape<'_, F>,
    q: Var,
    k: Var,
    v: Var,
    mask: Option<&[bool]>,
    rel: Option<RelInput<'_>>,
    dropout: f64,
    rng: Option<&mut dyn RngCore>,
) -> Result<(Var, Var)> {
    let (nq, dk) = (tape.value(q).rows(), tape.value(q).cols());
    let nk = tape.value(k).rows();
    if tape.value(v).rows() != nk {
        return Err(Error::dim("attention", tape.shape(k), tape.shape(v)));
    }
    let mut logits = tape.matmul_bt(q, k)?;
    if let Some(rel) = rel {
        if nq != nk || rel.labels.len() != nq * nk {
            return Err(Error::dim("relation matrix", &[nq, nk], &[rel.labels.len()]));
        }
        let qa = tape.matmul_bt(q, rel.key)?;
        let bias = tape.gather_rel(qa, rel.labels)?;
        logits = tape.add(logits, bias)?;
    }
    let scaled = tape.scale(logits, 1.0 / (dk as f64).sqrt());
    let a = tape.softmax_rows(scaled, mask)?;
    let mixed = tape.dropout(a, dropout, rng)?;
    let mut z = tape.matmul(mixed, v)?;
    if let Some(rel) = rel {
        let per_label = tape.scatter_rel(mixed, rel.labels, Relation::COUNT)?;
        let shift = tape.matmul(per_label, rel.value)?;
        z = tape.add(z, shift)?;
    }
    Ok((z, a))
}

/// Parameters of one attention + feed-forward block.
#[derive(Clone, Debug)]
pub struct MhaLayer {
    pub heads: usize,
    pub d_model: usize,
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
}

/// Output of [`MhaLayer::forward`]: new representations and the per-head
/// attention matrices.
pub struct MhaOutput {
    pub x: Var,
    pub attention: Vec<Var>,
}

impl MhaLayer {
    pub fn new<F: Float>(
        params: &mut ParamSet<F>,
        prefix: &str,
        d_model: usize,
        d_ff: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if heads == 0 || !d_model.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "d_model {d_model} is not divisible by {heads} heads"
            )));
        }
        let p = |s: &str| format!("{prefix}.{s}");
        Ok(MhaLayer {
            heads,
            d_model,
            wq: params.add_xavier(p("wq"), d_model, d_model, rng),
            wk: params.add_xavier(p("wk"), d_model, d_model, rng),
            wv: params.add_xavier(p("wv"), d_model, d_model, rng),
            wo: params.add_xavier(p("wo"), d_model, d_model, rng),
            bo: params.add_filled(p("bo"), &[d_model], 0.0),
            ln1_gain: params.add_filled(p("ln1.gain"), &[d_model], 1.0),
            ln1_bias: params.add_filled(p("ln1.bias"), &[d_model], 0.0),
            w1: params.add_xavier(p("ff.w1"), d_model, d_ff, rng),
            b1: params.add_filled(p("ff.b1"), &[d_ff], 0.0),
            w2: params.add_xavier(p("ff.w2"), d_ff, d_model, rng),
            b2: params.add_filled(p("ff.b2"), &[d_model], 0.0),
            ln2_gain: params.add_filled(p("ln2.gain"), &[d_model], 1.0),
            ln2_bias: params.add_filled(p("ln2.bias"), &[d_model], 0.0),
        })
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.heads
    }

    /// Multi-head self-attention followed by the position-wise feed-forward
    /// sublayer, each wrapped in residual + layer norm. `key_mask[j]` blocks
    /// key `j` for every query.
    pub fn forward<F: Float>(
        &self,
        tape: &mut Tape<'_, F>,
        x: Var,
        key_mask: Option<&[bool]>,
        rel: Option<RelInput<'_>>,
        dropout: f64,
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<MhaOutput> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != self.d_model {
            return Err(Error::dim("multi_head", &shape, &[0, self.d_model]));
        }
        let n = shape[0];
        let mask = expand_key_mask(key_mask, n);
        let dk = self.d_k();

        let (wq, wk, wv) = (tape.param(self.wq), tape.param(self.wk), tape.param(self.wv));
        let q = tape.matmul(x, wq)?;
        let k = tape.matmul(x, wk)?;
        let v = tape.matmul(x, wv)?;
        let mut heads = Vec::with_capacity(self.heads);
        let mut attention = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(q, h * dk, dk)?;
            let kh = tape.slice_cols(k, h * dk, dk)?;
            let vh = tape.slice_cols(v, h * dk, dk)?;
            let (z, a) = attend(
                tape,
                qh,
                kh,
                vh,
                mask.as_deref(),
                rel,
                dropout,
                rng.as_mut().map(|r| &mut **r as &mut dyn RngCore),
            )?;
            heads.push(z);
            attention.push(a);
        }
        let z = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
        let wo = tape.param(self.wo);
        let bo = tape.param(self.bo);
        let proj = tape.matmul(z, wo)?;
        let proj = tape.add_row(proj, bo)?;
        let proj = tape.dropout(proj, dropout, rng.as_mut().map(|r| &mut **r as &mut dyn RngCore))?;
        let res = tape.add(x, proj)?;
        let (g1, b1) = (tape.param(self.ln1_gain), tape.param(self.ln1_bias));
        let x1 = tape.layer_norm(res, g1, b1, LAYER_NORM_EPS)?;

        let (w1, bb1, w2, bb2) = (
            tape.param(self.w1),
            tape.param(self.b1),
            tape.param(self.w2),
            tape.param(self.b2),
        );
        let hdn = tape.matmul(x1, w1)?;
        let hdn = tape.add_row(hdn, bb1)?;
        let hdn = tape.relu(hdn);
        let ff = tape.matmul(hdn, w2)?;
        let ff = tape.add_row(ff, bb2)?;
        let ff = tape.dropout(ff, dropout, rng.as_mut().map(|r| &mut **r as &mut dyn RngCore))?;
        let res = tape.add(x1, ff)?;
        let (g2, b2) = (tape.param(self.ln2_gain), tape.param(self.ln2_bias));
        let out = tape.layer_norm(res, g2, b2, LAYER_NORM_EPS)?;
        Ok(MhaOutput { x: out, attention })
    }
}

/// Attention pooling: `α = softmax(γᵀ u_k)` over rows of `u`, `v = Σ α_k u_k`.
/// Returns `(v [1×d], α [1×n])`.
pub fn attn_pool<F: Float>(tape: &mut Tape<'_, F>, u: Var, gamma: Var) -> Result<(Var, Var)> {
    if tape.value(u).rows() == 0 {
        return Err(Error::Data("attention pooling over zero rows".into()));
    }
    let logits = tape.matmul_bt(gamma, u)?;
    let alpha = tape.softmax_rows(logits, None)?;
    let v = tape.matmul(alpha, u)?;
    Ok((v, alpha))
}

/// `p = softmax(W_pᵀ v + b_p)`. Returns `(logits, p)`.
pub fn classify<F: Float>(tape: &mut Tape<'_, F>, v: Var, w: Var, b: Var) -> Result<(Var, Var)> {
    let logits = tape.matmul(v, w)?;
    let logits = tape.add_row(logits, b)?;
    let p = tape.softmax_rows(logits, None)?;
    Ok((logits, p))
}

/// Sinusoidal time-delay embedding of a latency bin.
pub fn tde(bin: usize, d_model: usize) -> Result<Vec<f64>> {
    if bin >= TIME_BINS {
        return Err(Error::Data(format!("time bin {bin} outside [0, {TIME_BINS})")));
    }
    Ok(sinusoid(bin, d_model))
}

/// Attention weights captured from one forward pass.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttentionTrace {
    pub n: usize,
    /// `layers[l][h]` is the row-major `n×n` matrix of head `h` in layer `l`.
    pub layers: Vec<Vec<Vec<f64>>>,
    /// Final pooling weights over posts.
    pub pooling: Vec<f64>,
}

impl AttentionTrace {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Head-averaged `n×n` matrix of layer `l`.
    pub fn head_mean(&self, l: usize) -> Vec<f64> {
        let heads = &self.layers[l];
        let mut out = vec![0.0; self.n * self.n];
        for h in heads {
            out.iter_mut().zip(h).for_each(|(o, &x)| *o += x);
        }
        let inv = 1.0 / heads.len().max(1) as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        out
    }
}
