//! Graph-transformer layer: multi-head neighbourhood attention with scalar
//! edge-weight embeddings, a gated residual, layer norm and ReLU.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tape::{Tape, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w_q: ParamId,
    pub b_q: ParamId,
    pub w_k: ParamId,
    pub b_k: ParamId,
    pub w_v: ParamId,
    pub b_v: ParamId,
    /// Edge embedding `e_ij = A_ij w_e + b_e`, both `1 x d_head`.
    pub w_e: ParamId,
    pub b_e: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtLayerParams {
    pub heads: Vec<HeadParams>,
    pub w_r: ParamId,
    pub b_r: ParamId,
    /// `3 d_h x 1` gate over `[h; r; h - r]`.
    pub w_g: ParamId,
    pub ln_scale: ParamId,
    pub ln_shift: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GtLayerParams {
    pub fn new(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden_dim: usize, n_heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if n_heads == 0 || hidden_dim % n_heads != 0 {
            return Err(Error::config(format!("hidden width {hidden_dim} is not divisible into {n_heads} heads")));
        }
        let d_head = hidden_dim / n_heads;
        let heads = (0..n_heads)
            .map(|h| {
                let p = format!("{prefix}.head{h}");
                HeadParams {
                    w_q: store.add_weight(format!("{p}.w_q"), input_dim, d_head, rng),
                    b_q: store.add_bias(format!("{p}.b_q"), d_head),
                    w_k: store.add_weight(format!("{p}.w_k"), input_dim, d_head, rng),
                    b_k: store.add_bias(format!("{p}.b_k"), d_head),
                    w_v: store.add_weight(format!("{p}.w_v"), input_dim, d_head, rng),
                    b_v: store.add_bias(format!("{p}.b_v"), d_head),
                    w_e: store.add_weight(format!("{p}.w_e"), 1, d_head, rng),
                    b_e: store.add_bias(format!("{p}.b_e"), d_head),
                }
            })
            .collect();
        Ok(Self {
            heads,
            w_r: store.add_weight(format!("{prefix}.w_r"), input_dim, hidden_dim, rng),
            b_r: store.add_bias(format!("{prefix}.b_r"), hidden_dim),
            w_g: store.add_weight(format!("{prefix}.w_g"), 3 * hidden_dim, 1, rng),
            ln_scale: store.add(format!("{prefix}.ln_scale"), Array2::ones((1, hidden_dim)), false),
            ln_shift: store.add_bias(format!("{prefix}.ln_shift"), hidden_dim),
            input_dim,
            hidden_dim,
        })
    }

    pub fn d_head(&self) -> usize {
        self.hidden_dim / self.heads.len()
    }
}

#[derive(Debug, Clone)]
pub struct GtLayerOutput {
    pub h: Var,
    /// Row-stochastic attention matrix per head.
    pub attention: Vec<Var>,
    /// Per-node residual gate.
    pub gate: Var,
}

/// Inverted dropout on `x`: entries zeroed with probability `rate`, the
/// rest scaled by `1 / (1 - rate)`.
pub fn feature_dropout(tape: &mut Tape, x: Var, rate: f64, rng: &mut ChaCha8Rng) -> Var {
    if rate <= 0.0 {
        return x;
    }
    let keep = 1.0 / (1.0 - rate);
    let mask = Array2::from_shape_fn(tape.shape(x), |_| if rng.random::<f64>() < rate { 0.0 } else { keep });
    let m = tape.constant(mask);
    tape.mul(x, m)
}

/// One graph-transformer layer over `h` (`N x d_in`) on adjacency `a`.
/// Neighbourhoods are `{j : A_ij > 0}`.
pub fn gt_layer_forward(tape: &mut Tape, bound: &Bound, params: &GtLayerParams, h: Var, a: Var) -> Result<GtLayerOutput> {
    let (n, d_in) = tape.shape(h);
    if d_in != params.input_dim {
        return Err(Error::shape(format!("layer expects width {}, got {d_in}", params.input_dim)));
    }
    if tape.shape(a) != (n, n) {
        return Err(Error::shape(format!("adjacency {:?} for {n} nodes", tape.shape(a))));
    }
    let mask = tape.value(a).mapv(|w| w > 0.0);
    if let Some(i) = mask.rows().into_iter().position(|r| !r.iter().any(|&m| m)) {
        return Err(Error::Runtime(format!("node {i} has an empty neighbourhood")));
    }

    let inv_sqrt = 1.0 / (params.d_head() as f64).sqrt();
    let mut head_out = Vec::with_capacity(params.heads.len());
    let mut attention = Vec::with_capacity(params.heads.len());
    for hp in &params.heads {
        let q = tape.affine(h, bound.var(hp.w_q), bound.var(hp.b_q));
        let k = tape.affine(h, bound.var(hp.w_k), bound.var(hp.b_k));
        let v = tape.affine(h, bound.var(hp.w_v), bound.var(hp.b_v));
        let w_e = bound.var(hp.w_e);
        let b_e = bound.var(hp.b_e);

        // q_i . (k_j + A_ij w_e + b_e)
        let kt = tape.transpose(k);
        let qk = tape.matmul(q, kt);
        let w_et = tape.transpose(w_e);
        let qw = tape.matmul(q, w_et);
        let edge = tape.mul(a, qw);
        let b_et = tape.transpose(b_e);
        let qb = tape.matmul(q, b_et);
        let s = tape.add(qk, edge);
        let s = tape.add(s, qb);
        let s = tape.scale(s, inv_sqrt);
        let att = tape.masked_softmax(s, mask.clone());

        // sum_j att_ij (v_j + A_ij w_e + b_e)
        let av = tape.matmul(att, v);
        let aa = tape.mul(att, a);
        let aa = tape.sum_rows(aa);
        let ew = tape.matmul(aa, w_e);
        let mass = tape.sum_rows(att);
        let eb = tape.matmul(mass, b_e);
        let out = tape.add(av, ew);
        let out = tape.add(out, eb);
        head_out.push(out);
        attention.push(att);
    }
    let hbar = if head_out.len() == 1 { head_out[0] } else { tape.concat_cols(&head_out) };

    let r = tape.affine(h, bound.var(params.w_r), bound.var(params.b_r));
    let diff = tape.sub(hbar, r);
    let triple = tape.concat_cols(&[hbar, r, diff]);
    let gate_logit = tape.matmul(triple, bound.var(params.w_g));
    let gate = tape.sigmoid(gate_logit);
    // (1 - g) hbar + g r = hbar - g (hbar - r)
    let shift = tape.mul(diff, gate);
    let mixed = tape.sub(hbar, shift);
    let normed = tape.layer_norm(mixed, LAYER_NORM_EPS);
    let scaled = tape.mul(normed, bound.var(params.ln_scale));
    let shifted = tape.add(scaled, bound.var(params.ln_shift));
    let out = tape.relu(shifted);
    Ok(GtLayerOutput { h: out, attention, gate })
}
