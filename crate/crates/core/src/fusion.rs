//! Attention fusion of the two modality embeddings and modality
//! contribution weights.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tape::{Tape, Var};

/// Guard in the denominator of the contribution score.
pub const CONTRIBUTION_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub w: ParamId,
    pub b: ParamId,
    pub w_img: ParamId,
    pub b_img: ParamId,
    pub w_non: ParamId,
    pub b_non: ParamId,
}

impl FusionParams {
    pub fn new(store: &mut ParamStore, prefix: &str, width: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: store.add_weight(format!("{prefix}.w"), width, width, rng),
            b: store.add_bias(format!("{prefix}.b"), width),
            w_img: store.add_weight(format!("{prefix}.w_img"), width, width, rng),
            b_img: store.add_bias(format!("{prefix}.b_img"), width),
            w_non: store.add_weight(format!("{prefix}.w_non"), width, width, rng),
            b_non: store.add_bias(format!("{prefix}.b_non"), width),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct JointEmbedding {
    pub z_img: Var,
    pub z_non: Var,
    pub z_sh: Var,
    pub z: Var,
    pub tau_sh: Var,
    pub tau_img: Var,
    pub tau_non: Var,
}

/// `Z_sh = (Z_img + Z_non) / 2`, `tau = tanh(Z W + B)` per embedding, and
/// `Z = tau_sh ⊙ Z_sh + tau_img ⊙ Z_img + tau_non ⊙ Z_non`.
pub fn fuse_modalities(tape: &mut Tape, bound: &Bound, params: &FusionParams, z_img: Var, z_non: Var) -> Result<JointEmbedding> {
    if tape.shape(z_img) != tape.shape(z_non) {
        return Err(Error::shape(format!(
            "modality embeddings {:?} and {:?} differ in shape",
            tape.shape(z_img),
            tape.shape(z_non)
        )));
    }
    let sum = tape.add(z_img, z_non);
    let z_sh = tape.scale(sum, 0.5);
    let mut attend = |z: Var, w: ParamId, b: ParamId| {
        let pre = tape.affine(z, bound.var(w), bound.var(b));
        tape.tanh(pre)
    };
    let tau_sh = attend(z_sh, params.w, params.b);
    let tau_img = attend(z_img, params.w_img, params.b_img);
    let tau_non = attend(z_non, params.w_non, params.b_non);
    let a = tape.mul(tau_sh, z_sh);
    let b = tape.mul(tau_img, z_img);
    let c = tape.mul(tau_non, z_non);
    let ab = tape.add(a, b);
    let z = tape.add(ab, c);
    Ok(JointEmbedding {
        z_img,
        z_non,
        z_sh,
        z,
        tau_sh,
        tau_img,
        tau_non,
    })
}

/// `softmax(|tau_img|_F^2 / |tau_sh|_F^2, |tau_non|_F^2 / |tau_sh|_F^2)`
/// as a `1 x 2` row `(omega_img, omega_non)`.
pub fn contribution_weights(tape: &mut Tape, tau_img: Var, tau_non: Var, tau_sh: Var) -> Result<Var> {
    let shape = tape.shape(tau_sh);
    if tape.shape(tau_img) != shape || tape.shape(tau_non) != shape {
        return Err(Error::shape("attention maps must share one shape"));
    }
    let sq_sh = tape.square(tau_sh);
    let norm_sh = tape.sum(sq_sh);
    let inv = tape.recip(norm_sh, CONTRIBUTION_EPS);
    let mut score = |tau: Var| {
        let sq = tape.square(tau);
        let n = tape.sum(sq);
        tape.mul(n, inv)
    };
    let f_img = score(tau_img);
    let f_non = score(tau_non);
    let f = tape.concat_cols(&[f_img, f_non]);
    Ok(tape.softmax_rows(f))
}

/// Two-way softmax of precomputed scores.
pub fn softmax_pair(f_img: f64, f_non: f64) -> (f64, f64) {
    let m = f_img.max(f_non);
    let (a, b) = ((f_img - m).exp(), (f_non - m).exp());
    (a / (a + b), b / (a + b))
}
