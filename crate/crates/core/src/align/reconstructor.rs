//! Lifting low-dimensional phenotype vectors to the common feature width.
//!
//! The default reconstructor is a variational autoencoder pretrained on the
//! phenotype rows and then frozen; its posterior mean is the lifted
//! representation. `Mlp`, `Ae` and `None` are ablation variants.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::linear::column_stats;
use crate::error::{Error, Result};
use crate::params::{Adam, AdamConfig, Bound, ParamStore};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconstructorKind {
    Vae,
    /// Frozen randomly initialised two-layer perceptron, no pretraining.
    Mlp,
    /// Deterministic autoencoder pretrained on reconstruction only.
    Ae,
    /// No lifting; raw standardised values zero-padded to the target width.
    None,
}

impl ReconstructorKind {
    pub const ALL: [ReconstructorKind; 4] = [Self::None, Self::Mlp, Self::Ae, Self::Vae];

    pub fn name(self) -> &'static str {
        match self {
            Self::Vae => "vae",
            Self::Mlp => "mlp",
            Self::Ae => "ae",
            Self::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vae" => Ok(Self::Vae),
            "mlp" => Ok(Self::Mlp),
            "ae" => Ok(Self::Ae),
            "none" => Ok(Self::None),
            other => Err(Error::config(format!("unknown reconstructor {other:?}; expected vae, mlp, ae or none"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub kind: ReconstructorKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Identifier of the cohort the reconstructor was pretrained on.
    pub cohort_id: String,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            kind: ReconstructorKind::Vae,
            lr: 1e-3,
            weight_decay: 5e-4,
            epochs: 3000,
            seed: 0,
            cohort_id: String::from("unspecified"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainStep {
    pub epoch: usize,
    pub reconstruction: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalReconstructor {
    pub kind: ReconstructorKind,
    pub input_dim: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub params: ParamStore,
    pub frozen: bool,
    pub config: PretrainConfig,
    pub trace: Vec<PretrainStep>,
}

/// `KL(N(mu, exp(logvar)) || N(0, I))`, averaged over rows.
pub fn gaussian_kl(mu: ArrayView2<f64>, logvar: ArrayView2<f64>) -> f64 {
    let total: f64 = mu
        .iter()
        .zip(logvar.iter())
        .map(|(&m, &lv)| -0.5 * (1.0 + lv - m * m - lv.exp()))
        .sum();
    total / mu.nrows() as f64
}

/// Hidden width `max(2 * d2, 16)`.
pub fn hidden_width(input_dim: usize) -> usize {
    (2 * input_dim).max(16)
}

struct Outputs {
    latent: Var,
    recon: Option<Var>,
    kl: Option<Var>,
}

impl VariationalReconstructor {
    fn init(kind: ReconstructorKind, input_dim: usize, latent_dim: usize, mean: Vec<f64>, scale: Vec<f64>, config: PretrainConfig) -> Self {
        let hidden = hidden_width(input_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        if kind != ReconstructorKind::None {
            params.add_weight("enc.w1", input_dim, hidden, &mut rng);
            params.add_bias("enc.b1", hidden);
            params.add_weight("enc.mu.w", hidden, latent_dim, &mut rng);
            params.add_bias("enc.mu.b", latent_dim);
        }
        if kind == ReconstructorKind::Vae {
            params.add_weight("enc.logvar.w", hidden, latent_dim, &mut rng);
            params.add_bias("enc.logvar.b", latent_dim);
        }
        if matches!(kind, ReconstructorKind::Vae | ReconstructorKind::Ae) {
            params.add_weight("dec.w1", latent_dim, hidden, &mut rng);
            params.add_bias("dec.b1", hidden);
            params.add_weight("dec.w2", hidden, input_dim, &mut rng);
            params.add_bias("dec.b2", input_dim);
        }
        Self {
            kind,
            input_dim,
            latent_dim,
            hidden_dim: hidden,
            mean,
            scale,
            params,
            frozen: false,
            config,
            trace: Vec::new(),
        }
    }

    fn standardized(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[k]) / self.scale[k];
            }
        }
        out
    }

    /// Encoder pass; with `train` set also the reconstruction (and, for the
    /// VAE, KL) terms, sampling the latent with the given noise.
    fn forward(&self, tape: &mut Tape, bound: &Bound, x: Array2<f64>, train: Option<Option<Array2<f64>>>) -> Outputs {
        let p = |name: &str| bound.var(self.params.find(name).expect("parameter registered in init"));
        let xv = tape.constant(x);
        let h = tape.affine(xv, p("enc.w1"), p("enc.b1"));
        let h = tape.relu(h);
        let mu = tape.affine(h, p("enc.mu.w"), p("enc.mu.b"));
        let Some(noise) = train else {
            return Outputs { latent: mu, recon: None, kl: None };
        };
        match self.kind {
            ReconstructorKind::Vae => {
                let logvar = tape.affine(h, p("enc.logvar.w"), p("enc.logvar.b"));
                let eps = tape.constant(noise.expect("VAE training needs latent noise"));
                let half = tape.scale(logvar, 0.5);
                let std = tape.exp(half);
                let jitter = tape.mul(std, eps);
                let z = tape.add(mu, jitter);
                let recon = self.decode_loss(tape, z, xv, &p);
                // mean over rows of sum -0.5 (1 + logvar - mu^2 - exp(logvar))
                let mu2 = tape.square(mu);
                let elv = tape.exp(logvar);
                let a = tape.sub(logvar, mu2);
                let a = tape.sub(a, elv);
                let a = tape.add_scalar(a, 1.0);
                let s = tape.sum(a);
                let n = tape.shape(xv).0 as f64;
                let kl = tape.scale(s, -0.5 / n);
                Outputs { latent: mu, recon: Some(recon), kl: Some(kl) }
            }
            ReconstructorKind::Ae => {
                let recon = self.decode_loss(tape, mu, xv, &p);
                Outputs { latent: mu, recon: Some(recon), kl: None }
            }
            ReconstructorKind::Mlp | ReconstructorKind::None => Outputs { latent: mu, recon: None, kl: None },
        }
    }

    fn decode_loss(&self, tape: &mut Tape, z: Var, x: Var, p: &dyn Fn(&str) -> Var) -> Var {
        let h = tape.affine(z, p("dec.w1"), p("dec.b1"));
        let h = tape.relu(h);
        let xhat = tape.affine(h, p("dec.w2"), p("dec.b2"));
        let diff = tape.sub(xhat, x);
        let sq = tape.square(diff);
        let s = tape.sum(sq);
        let n = tape.shape(x).0 as f64;
        tape.scale(s, 1.0 / n)
    }

    /// Posterior mean (or deterministic latent) of every row.
    pub fn encode_nonimaging(&self, nonimaging: ArrayView2<f64>) -> Result<Array2<f64>> {
        if !self.frozen {
            return Err(Error::validation("reconstructor must be frozen before encoding"));
        }
        if nonimaging.ncols() != self.input_dim {
            return Err(Error::shape(format!(
                "reconstructor expects {} attributes, got {}",
                self.input_dim,
                nonimaging.ncols()
            )));
        }
        let x = self.standardized(nonimaging);
        if self.kind == ReconstructorKind::None {
            let mut out = Array2::zeros((x.nrows(), self.latent_dim));
            let w = self.input_dim.min(self.latent_dim);
            out.slice_mut(ndarray::s![.., ..w]).assign(&x.slice(ndarray::s![.., ..w]));
            return Ok(out);
        }
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &bound, x, None);
        Ok(tape.value(out.latent).clone())
    }

    pub fn final_reconstruction_loss(&self) -> Option<f64> {
        self.trace.last().map(|s| s.reconstruction)
    }

    /// Versioned binary checkpoint: magic, format version, then a
    /// length-prefixed JSON document.
    pub fn to_bytes(&self) -> Vec<u8> {
        let body = serde_json::to_vec(self).expect("reconstructor is serialisable");
        let mut out = Vec::with_capacity(body.len() + 20);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(body.len() as u64).to_le_bytes());
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::validation(format!("invalid reconstructor checkpoint: {msg}"));
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("missing magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + len).ok_or_else(|| bad("truncated body"))?;
        serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"MMGTREC\0";
const CHECKPOINT_VERSION: u32 = 1;

/// Pretrains a reconstructor of the configured kind on `nonimaging` (`N x d2`)
/// and returns it frozen.
pub fn pretrain_vae(nonimaging: ArrayView2<f64>, latent_dim: usize, config: &PretrainConfig) -> Result<VariationalReconstructor> {
    let (n, d2) = nonimaging.dim();
    if d2 == 0 {
        return Err(Error::validation("reconstructor needs at least one attribute"));
    }
    if n == 0 {
        return Err(Error::validation("reconstructor needs at least one row"));
    }
    if config.epochs == 0 {
        return Err(Error::validation("pretraining needs at least one epoch"));
    }
    if latent_dim == 0 {
        return Err(Error::validation("latent dimension must be positive"));
    }
    let (mean, scale) = column_stats(nonimaging);
    let mut model = VariationalReconstructor::init(config.kind, d2, latent_dim, mean.to_vec(), scale.to_vec(), config.clone());
    let x = model.standardized(nonimaging);

    if matches!(config.kind, ReconstructorKind::Vae | ReconstructorKind::Ae) {
        let mut opt = Adam::new(AdamConfig::new(config.lr, config.weight_decay), &model.params);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
        for epoch in 0..config.epochs {
            let noise = (config.kind == ReconstructorKind::Vae)
                .then(|| Array2::from_shape_fn((n, latent_dim), |_| StandardNormal.sample(&mut rng)));
            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape);
            let out = model.forward(&mut tape, &bound, x.clone(), Some(noise));
            let recon = out.recon.expect("trainable kinds produce a reconstruction");
            let recon_value = tape.item(recon);
            let kl_value = out.kl.map(|k| tape.item(k)).unwrap_or(0.0);
            if !recon_value.is_finite() || !kl_value.is_finite() {
                return Err(Error::NonFinite {
                    component: "reconstructor pretraining".into(),
                    detail: format!("epoch {epoch}: reconstruction {recon_value}, kl {kl_value}"),
                });
            }
            model.trace.push(PretrainStep {
                epoch,
                reconstruction: recon_value,
                kl: kl_value,
            });
            let loss = match out.kl {
                Some(kl) => tape.add(recon, kl),
                None => recon,
            };
            let mut grads = tape.backward(loss);
            let g = bound.collect(&model.params, &mut grads);
            opt.step(&mut model.params, &g);
        }
    }
    model.frozen = true;
    Ok(model)
}
