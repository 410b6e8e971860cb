//! Classification head, graph regularisers and the total training loss.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tape::{Tape, Var};

/// Guard inside the logarithm of the degree term.
pub const DEGREE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Smoothness weight.
    pub lambda: f64,
    /// Degree weight.
    pub mu: f64,
    /// Reward weight.
    pub eta: f64,
}

impl LossWeights {
    pub fn abide() -> Self {
        Self {
            lambda: 1.0,
            mu: 1e-4,
            eta: 1e-2,
        }
    }

    pub fn adhd200() -> Self {
        Self {
            lambda: 1.0,
            mu: 1e-1,
            eta: 1e-2,
        }
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::abide()
    }
}

/// Two-layer perceptron readout to two class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl HeadParams {
    pub fn new(store: &mut ParamStore, prefix: &str, width: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w1: store.add_weight(format!("{prefix}.w1"), width, hidden, rng),
            b1: store.add_bias(format!("{prefix}.b1"), hidden),
            w2: store.add_weight(format!("{prefix}.w2"), hidden, 2, rng),
            b2: store.add_bias(format!("{prefix}.b2"), 2),
        }
    }

    pub fn logits(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Var {
        let h = tape.affine(z, bound.var(self.w1), bound.var(self.b1));
        let h = tape.relu(h);
        tape.affine(h, bound.var(self.w2), bound.var(self.b2))
    }
}

/// Mean negative log-likelihood over the rows in `idx`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, idx: &[usize], labels: &[u8]) -> Result<Var> {
    if idx.is_empty() {
        return Err(Error::validation("cross-entropy needs at least one labelled node"));
    }
    let (n, c) = tape.shape(logits);
    if labels.len() != n || c != 2 {
        return Err(Error::shape(format!("{n}x{c} logits for {} labels", labels.len())));
    }
    let ls = tape.log_softmax_rows(logits);
    let at: Vec<(usize, usize)> = idx.iter().map(|&i| (i, labels[i] as usize)).collect();
    let picked = tape.pick(ls, &at);
    let total = tape.sum(picked);
    Ok(tape.scale(total, -1.0 / idx.len() as f64))
}

/// Logits for every node and the cross-entropy over `train_idx`.
pub fn classification_head(tape: &mut Tape, bound: &Bound, head: &HeadParams, z: Var, train_idx: &[usize], labels: &[u8]) -> Result<(Var, Var)> {
    let logits = head.logits(tape, bound, z);
    let ce = cross_entropy(tape, logits, train_idx, labels)?;
    Ok((logits, ce))
}

/// `l_smh = (1/2N^2) sum_ij A_ij |z_i - z_j|^2`.
pub fn smoothness(tape: &mut Tape, z: Var, a: Var) -> Var {
    let n = tape.shape(z).0 as f64;
    let d = tape.pairwise_sq_dist(z);
    let w = tape.mul(a, d);
    let s = tape.sum(w);
    tape.scale(s, 1.0 / (2.0 * n * n))
}

/// `l_deg = -(1/N) sum_i log(sum_j A_ij)`.
pub fn degree(tape: &mut Tape, a: Var) -> Var {
    let n = tape.shape(a).0 as f64;
    let deg = tape.sum_rows(a);
    let logd = tape.ln(deg, DEGREE_EPS);
    let s = tape.sum(logd);
    tape.scale(s, -1.0 / n)
}

/// Both regularisers of one modality channel.
pub fn graph_regularization(tape: &mut Tape, z: Var, a: Var) -> Result<(Var, Var)> {
    let n = tape.shape(z).0;
    if tape.shape(a) != (n, n) {
        return Err(Error::shape(format!("adjacency {:?} for {n} embeddings", tape.shape(a))));
    }
    Ok((smoothness(tape, z, a), degree(tape, a)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ce: f64,
    pub l_smh_img: f64,
    pub l_smh_non: f64,
    pub l_deg: f64,
    pub l_r: f64,
    pub l_total: f64,
    pub omega_img: f64,
    pub omega_non: f64,
}

/// Components of the total loss as recorded on the tape. Absent smoothness
/// or reward terms contribute zero.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub l_ce: Var,
    pub l_smh_img: Option<Var>,
    pub l_smh_non: Option<Var>,
    pub l_deg: Var,
    pub l_r: Option<Var>,
    /// `1 x 2` row `(omega_img, omega_non)`.
    pub omega: Var,
}

/// `l_ce + w_img (lambda l_smh_img + mu l_deg) + w_non (lambda l_smh_non + mu l_deg + eta l_r)`.
pub fn total_objective(tape: &mut Tape, terms: &LossTerms, weights: &LossWeights) -> Result<(Var, LossBreakdown)> {
    let value = |tape: &Tape, v: Option<Var>| v.map_or(0.0, |v| tape.item(v));
    let checks = [
        ("cross-entropy", Some(terms.l_ce)),
        ("imaging smoothness", terms.l_smh_img),
        ("non-imaging smoothness", terms.l_smh_non),
        ("degree", Some(terms.l_deg)),
        ("reward", terms.l_r),
    ];
    for (name, v) in checks {
        let x = value(tape, v);
        if !x.is_finite() {
            return Err(Error::NonFinite {
                component: name.into(),
                detail: format!("loss term evaluated to {x}"),
            });
        }
    }

    let mu_deg = tape.scale(terms.l_deg, weights.mu);
    let group = |tape: &mut Tape, smh: Option<Var>, extra: Option<Var>| {
        let mut g = mu_deg;
        if let Some(s) = smh {
            let s = tape.scale(s, weights.lambda);
            g = tape.add(g, s);
        }
        if let Some(r) = extra {
            let r = tape.scale(r, weights.eta);
            g = tape.add(g, r);
        }
        g
    };
    let g_img = group(tape, terms.l_smh_img, None);
    let g_non = group(tape, terms.l_smh_non, terms.l_r);
    let w_img = tape.slice_cols(terms.omega, 0, 1);
    let w_non = tape.slice_cols(terms.omega, 1, 2);
    let a = tape.mul(g_img, w_img);
    let b = tape.mul(g_non, w_non);
    let ab = tape.add(a, b);
    let total = tape.add(terms.l_ce, ab);

    let omega = tape.value(terms.omega);
    let breakdown = LossBreakdown {
        l_ce: tape.item(terms.l_ce),
        l_smh_img: value(tape, terms.l_smh_img),
        l_smh_non: value(tape, terms.l_smh_non),
        l_deg: tape.item(terms.l_deg),
        l_r: value(tape, terms.l_r),
        l_total: tape.item(total),
        omega_img: omega[[0, 0]],
        omega_non: omega[[0, 1]],
    };
    if !breakdown.l_total.is_finite() {
        return Err(Error::NonFinite {
            component: "total".into(),
            detail: format!("{breakdown:?}"),
        });
    }
    Ok((total, breakdown))
}
