use serde::{Deserialize, Serialize};

use crate::align::ReconstructorKind;
use crate::amrs::Beta;
use crate::encoder::{Architecture, EncoderConfig};
use crate::error::{Error, Result};
use crate::objective::LossWeights;

/// Which modality channels feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    Both,
    Imaging,
    NonImaging,
}

impl Modality {
    pub const ALL: [Self; 3] = [Self::Both, Self::Imaging, Self::NonImaging];

    pub fn name(self) -> &'static str {
        match self {
            Self::Both => "both",
            Self::Imaging => "imaging",
            Self::NonImaging => "non-imaging",
        }
    }

    pub fn uses_imaging(self) -> bool {
        self != Self::NonImaging
    }

    pub fn uses_nonimaging(self) -> bool {
        self != Self::Imaging
    }
}

/// Source of the affinity matrix that gates the population graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    /// Learned reward-system affinity.
    Amrs,
    /// Fixed fraction of matching attributes.
    AttributeMatch,
    /// Feature similarity alone (affinity 1 everywhere).
    Similarity,
}

impl GraphKind {
    pub const ALL: [Self; 3] = [Self::Amrs, Self::AttributeMatch, Self::Similarity];

    pub fn name(self) -> &'static str {
        match self {
            Self::Amrs => "amrs",
            Self::AttributeMatch => "attribute-match",
            Self::Similarity => "similarity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Abide,
    Adhd200,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Self::Abide => "abide",
            Self::Adhd200 => "adhd200",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "abide" => Ok(Self::Abide),
            "adhd200" => Ok(Self::Adhd200),
            other => Err(Error::config(format!("unknown preset {other:?}; expected abide or adhd200"))),
        }
    }

    pub fn loss_weights(self) -> LossWeights {
        match self {
            Self::Abide => LossWeights::abide(),
            Self::Adhd200 => LossWeights::adhd200(),
        }
    }
}

/// Every knob of one cross-validated run. Field names double as config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub preset: Preset,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub dropout: f64,
    pub edge_dropout: f64,
    /// Common width both modalities are aligned to.
    pub embed_dim: usize,
    pub pool_ratio: f64,
    pub depth_imaging: usize,
    pub depth_nonimaging: usize,
    pub hidden_dim: usize,
    pub n_heads: usize,
    pub architecture: Architecture,
    pub reconstructor: ReconstructorKind,
    pub modality: Modality,
    pub graph: GraphKind,
    pub lambda: f64,
    pub mu: f64,
    pub eta: f64,
    pub beta_reward: f64,
    pub beta_penalty: f64,
    pub beta_motivation: f64,
    /// Kernel width; the mean training-pair distance when absent.
    pub sigma: Option<f64>,
    pub sampling_ratio: f64,
    pub n_folds: usize,
    pub seed: u64,
    pub rfe_step: f64,
    pub pretrain_lr: f64,
    pub pretrain_weight_decay: f64,
    pub pretrain_epochs: usize,
    /// Pretrain the reconstructor on training rows only instead of all rows.
    pub pretrain_train_only: bool,
    pub parallel_folds: bool,
    /// Let the smoothness and degree terms update the attribute weights
    /// through the adjacency; otherwise they treat the adjacency as fixed.
    pub graph_reg_updates_alpha: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::preset(Preset::Abide)
    }
}

impl TrainConfig {
    pub fn preset(preset: Preset) -> Self {
        let w = preset.loss_weights();
        let beta = Beta::default();
        let enc = EncoderConfig::default();
        Self {
            preset,
            lr: 1e-4,
            weight_decay: 5e-4,
            max_epochs: 300,
            patience: 100,
            dropout: 0.3,
            edge_dropout: 0.3,
            embed_dim: 500,
            pool_ratio: 0.8,
            depth_imaging: 2,
            depth_nonimaging: 3,
            hidden_dim: enc.hidden_dim,
            n_heads: enc.n_heads,
            architecture: Architecture::GtUnet,
            reconstructor: ReconstructorKind::Vae,
            modality: Modality::Both,
            graph: GraphKind::Amrs,
            lambda: w.lambda,
            mu: w.mu,
            eta: w.eta,
            beta_reward: beta.reward,
            beta_penalty: beta.penalty,
            beta_motivation: beta.motivation,
            sigma: None,
            sampling_ratio: 1.0,
            n_folds: 10,
            seed: 0,
            rfe_step: 0.1,
            pretrain_lr: 1e-3,
            pretrain_weight_decay: 5e-4,
            pretrain_epochs: 3000,
            pretrain_train_only: false,
            parallel_folds: false,
            graph_reg_updates_alpha: false,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda: self.lambda,
            mu: self.mu,
            eta: self.eta,
        }
    }

    pub fn beta(&self) -> Beta {
        Beta {
            reward: self.beta_reward,
            penalty: self.beta_penalty,
            motivation: self.beta_motivation,
        }
    }

    pub fn encoder_config(&self, depth: usize) -> EncoderConfig {
        EncoderConfig {
            depth,
            pool_ratio: self.pool_ratio,
            hidden_dim: self.hidden_dim,
            n_heads: self.n_heads,
            architecture: self.architecture,
            dropout: self.dropout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("pretrain_lr", self.pretrain_lr),
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("eta", self.eta),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("weight_decay", self.weight_decay), ("pretrain_weight_decay", self.pretrain_weight_decay)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be non-negative, got {v}")));
            }
        }
        for (name, v) in [("dropout", self.dropout), ("edge_dropout", self.edge_dropout)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0,1), got {v}")));
            }
        }
        if self.patience > self.max_epochs {
            return Err(Error::config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.sampling_ratio > 0.0 && self.sampling_ratio <= 1.0) {
            return Err(Error::config(format!("sampling_ratio must lie in (0,1], got {}", self.sampling_ratio)));
        }
        if !(self.rfe_step > 0.0 && self.rfe_step < 1.0) {
            return Err(Error::config(format!("rfe_step must lie in (0,1), got {}", self.rfe_step)));
        }
        if self.embed_dim == 0 {
            return Err(Error::config("embed_dim must be positive"));
        }
        if self.n_folds < 3 {
            return Err(Error::config(format!("n_folds must be at least 3, got {}", self.n_folds)));
        }
        if self.pretrain_epochs == 0 {
            return Err(Error::config("pretrain_epochs must be positive"));
        }
        if let Some(s) = self.sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::config(format!("sigma must be positive, got {s}")));
            }
        }
        self.beta().validate()?;
        self.encoder_config(self.depth_imaging).validate()?;
        self.encoder_config(self.depth_nonimaging).validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_install_published_hyperparameters() {
        let a = TrainConfig::preset(Preset::Abide);
        assert_eq!((a.lambda, a.mu, a.eta), (1.0, 1e-4, 1e-2));
        assert_eq!((a.embed_dim, a.depth_imaging, a.depth_nonimaging, a.pool_ratio), (500, 2, 3, 0.8));
        assert_eq!((a.lr, a.weight_decay, a.max_epochs, a.patience, a.dropout), (1e-4, 5e-4, 300, 100, 0.3));
        let h = TrainConfig::preset(Preset::Adhd200);
        assert_eq!((h.lambda, h.mu, h.eta), (1.0, 1e-1, 1e-2));
        a.validate().unwrap();
        h.validate().unwrap();
    }

    #[test]
    fn constraint_violations_are_rejected() {
        let bad = [
            TrainConfig { pool_ratio: 1.5, ..TrainConfig::default() },
            TrainConfig { beta_motivation: 1.5, ..TrainConfig::default() },
            TrainConfig { patience: 400, ..TrainConfig::default() },
            TrainConfig { sampling_ratio: 0.0, ..TrainConfig::default() },
            TrainConfig { lr: 0.0, ..TrainConfig::default() },
            TrainConfig { edge_dropout: 1.0, ..TrainConfig::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
