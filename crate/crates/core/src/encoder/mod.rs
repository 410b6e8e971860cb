//! Graph-transformer U-Net encoder and its architecture variants.

mod layer;
mod pool;

pub use layer::{feature_dropout, gt_layer_forward, GtLayerOutput, GtLayerParams, HeadParams, LAYER_NORM_EPS};
pub use pool::{gpool, gunpool, pooled_count, top_k, PoolRecord};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Stacking,
    Residual,
    Cascade,
    #[serde(rename = "gtunet")]
    GtUnet,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [Self::Stacking, Self::Residual, Self::Cascade, Self::GtUnet];

    pub fn name(self) -> &'static str {
        match self {
            Self::Stacking => "stacking",
            Self::Residual => "residual",
            Self::Cascade => "cascade",
            Self::GtUnet => "gtunet",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config(format!("unknown architecture {s:?}; expected stacking, residual, cascade or gtunet")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Number of pooling levels `l`; every variant applies `2l + 1` layers.
    pub depth: usize,
    pub pool_ratio: f64,
    pub hidden_dim: usize,
    pub n_heads: usize,
    pub architecture: Architecture,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            pool_ratio: 0.8,
            hidden_dim: 64,
            n_heads: 4,
            architecture: Architecture::GtUnet,
            dropout: 0.3,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::config("encoder depth must be at least 1"));
        }
        if !(self.pool_ratio > 0.0 && self.pool_ratio <= 1.0) {
            return Err(Error::config(format!("pool_ratio must lie in (0,1], got {}", self.pool_ratio)));
        }
        if self.n_heads == 0 || self.hidden_dim == 0 || self.hidden_dim % self.n_heads != 0 {
            return Err(Error::config(format!(
                "hidden_dim {} must be a positive multiple of n_heads {}",
                self.hidden_dim, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout must lie in [0,1), got {}", self.dropout)));
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        2 * self.depth + 1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderTrace {
    pub layer_applications: usize,
    /// Retained indices per pooling level, outermost first.
    pub pool_indices: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub h: Var,
    pub trace: EncoderTrace,
    /// Attention matrices of every layer application, per head.
    pub attention: Vec<Vec<Var>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtEncoder {
    pub config: EncoderConfig,
    pub input_dim: usize,
    pub layers: Vec<GtLayerParams>,
    pub pool_scores: Vec<ParamId>,
}

impl GtEncoder {
    pub fn new(store: &mut ParamStore, prefix: &str, input_dim: usize, config: &EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let d_h = config.hidden_dim;
        let layers = (0..config.n_layers())
            .map(|k| {
                let d_in = match (config.architecture, k) {
                    (_, 0) => input_dim,
                    (Architecture::Cascade, k) => k * d_h,
                    _ => d_h,
                };
                GtLayerParams::new(store, &format!("{prefix}.layer{k}"), d_in, d_h, config.n_heads, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let pool_scores = if config.architecture == Architecture::GtUnet {
            (0..config.depth)
                .map(|l| store.add_weight(format!("{prefix}.pool{l}.p"), d_h, 1, rng))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            config: config.clone(),
            input_dim,
            layers,
            pool_scores,
        })
    }

    fn layer(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        k: usize,
        h: Var,
        a: Var,
        rng: Option<&mut ChaCha8Rng>,
        out: &mut EncoderOutput,
    ) -> Result<Var> {
        let h = match rng {
            Some(r) => feature_dropout(tape, h, self.config.dropout, r),
            None => h,
        };
        let res = gt_layer_forward(tape, bound, &self.layers[k], h, a)?;
        out.trace.layer_applications += 1;
        out.attention.push(res.attention);
        Ok(res.h)
    }

    /// Runs the encoder on node features `h0` and adjacency `a0`. Passing a
    /// generator enables feature dropout on every layer input.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, h0: Var, a0: Var, rng: Option<&mut ChaCha8Rng>) -> Result<EncoderOutput> {
        let mut rng = rng;
        let mut out = EncoderOutput {
            h: h0,
            trace: EncoderTrace::default(),
            attention: Vec::new(),
        };
        let n_layers = self.config.n_layers();
        let h = match self.config.architecture {
            Architecture::GtUnet => {
                let mut h = h0;
                let mut a = a0;
                let mut records = Vec::with_capacity(self.config.depth);
                for l in 0..self.config.depth {
                    h = self.layer(tape, bound, l, h, a, rng.as_deref_mut(), &mut out)?;
                    let (hp, ap, rec) = gpool(tape, h, a, self.config.pool_ratio, bound.var(self.pool_scores[l]))?;
                    out.trace.pool_indices.push(rec.idx.clone());
                    records.push(rec);
                    h = hp;
                    a = ap;
                }
                h = self.layer(tape, bound, self.config.depth, h, a, rng.as_deref_mut(), &mut out)?;
                for (step, rec) in records.iter().rev().enumerate() {
                    h = gunpool(tape, h, rec)?;
                    a = rec.pre_adjacency;
                    h = self.layer(tape, bound, self.config.depth + 1 + step, h, a, rng.as_deref_mut(), &mut out)?;
                }
                h
            }
            Architecture::Stacking => {
                let mut h = h0;
                for k in 0..n_layers {
                    h = self.layer(tape, bound, k, h, a0, rng.as_deref_mut(), &mut out)?;
                }
                h
            }
            Architecture::Residual => {
                let mut h = h0;
                for k in 0..n_layers {
                    let next = self.layer(tape, bound, k, h, a0, rng.as_deref_mut(), &mut out)?;
                    h = if tape.shape(next) == tape.shape(h) { tape.add(next, h) } else { next };
                }
                h
            }
            Architecture::Cascade => {
                let mut outputs: Vec<Var> = Vec::with_capacity(n_layers);
                for k in 0..n_layers {
                    let input = match outputs.len() {
                        0 => h0,
                        1 => outputs[0],
                        _ => tape.concat_cols(&outputs),
                    };
                    let next = self.layer(tape, bound, k, input, a0, rng.as_deref_mut(), &mut out)?;
                    outputs.push(next);
                }
                *outputs.last().expect("at least one layer")
            }
        };
        out.h = h;
        Ok(out)
    }
}
