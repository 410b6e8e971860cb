use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::metrics::{mean_std, Metrics};
use super::train::FoldOutput;
use crate::align::PretrainStep;
use crate::objective::LossBreakdown;

/// Loss components of one training epoch plus the validation accuracy
/// observed after the step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_ce: f64,
    pub l_smh_img: f64,
    pub l_smh_non: f64,
    pub l_deg: f64,
    pub l_r: f64,
    pub l_total: f64,
    pub omega_img: f64,
    pub omega_non: f64,
    pub val_acc: f64,
    /// Attribute weights after this epoch's step; empty without AMRS.
    pub alpha: Vec<f64>,
}

impl EpochRecord {
    pub fn new(epoch: usize, b: &LossBreakdown, val_acc: f64, alpha: Vec<f64>) -> Self {
        Self {
            epoch,
            l_ce: b.l_ce,
            l_smh_img: b.l_smh_img,
            l_smh_non: b.l_smh_non,
            l_deg: b.l_deg,
            l_r: b.l_r,
            l_total: b.l_total,
            omega_img: b.omega_img,
            omega_non: b.omega_non,
            val_acc,
            alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    /// Error message when the fold aborted; metrics are then NaN.
    pub error: Option<String>,
    pub metrics: Metrics,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_acc: f64,
    pub omega_img: f64,
    pub omega_non: f64,
    pub alpha: Option<Vec<f64>>,
    pub sigma: f64,
    pub loss_trace: Vec<EpochRecord>,
    pub wall_clock_s: f64,
}

impl FoldResult {
    pub fn from_output(out: &FoldOutput) -> Self {
        Self {
            fold: out.fold,
            error: None,
            metrics: out.metrics,
            best_epoch: out.best_epoch,
            epochs_run: out.epochs_run,
            best_val_acc: out.best_val_acc,
            omega_img: out.omega.0,
            omega_non: out.omega.1,
            alpha: out.alpha.clone(),
            sigma: out.sigma,
            loss_trace: out.trace.clone(),
            wall_clock_s: out.wall_clock_s,
        }
    }

    pub fn failed(fold: usize, error: String) -> Self {
        Self {
            fold,
            error: Some(error),
            metrics: Metrics::nan(),
            best_epoch: 0,
            epochs_run: 0,
            best_val_acc: f64::NAN,
            omega_img: f64::NAN,
            omega_non: f64::NAN,
            alpha: None,
            sigma: f64::NAN,
            loss_trace: Vec::new(),
            wall_clock_s: 0.0,
        }
    }
}

/// Per-metric mean and sample standard deviation over the folds where the
/// metric is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Metrics,
    pub std: Metrics,
    /// `"mean (std)"` in percent per metric.
    pub formatted: BTreeMap<String, String>,
}

impl Summary {
    pub fn from_folds(folds: &[FoldResult]) -> Self {
        let mut mean = [0.0; 4];
        let mut std = [0.0; 4];
        let mut formatted = BTreeMap::new();
        for (k, name) in Metrics::NAMES.iter().enumerate() {
            let values: Vec<f64> = folds.iter().map(|f| f.metrics.values()[k]).collect();
            let (m, s) = mean_std(&values);
            mean[k] = m;
            std[k] = s;
            formatted.insert(name.to_string(), format_mean_std(m, s));
        }
        Self {
            mean: Metrics::from_values(mean),
            std: Metrics::from_values(std),
            formatted,
        }
    }
}

/// Percentages with two decimals, e.g. `"82.92 (0.54)"`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{:.2} ({:.2})", 100.0 * mean, 100.0 * std)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub n_folds: usize,
    pub failed: bool,
    pub folds: Vec<FoldResult>,
    pub summary: Summary,
    /// Mean test accuracy of the elimination plus linear classifier baseline.
    pub linear_oracle_acc: Option<f64>,
    pub attribute_names: Vec<String>,
    pub n_subjects: usize,
    /// Reconstructor pretraining losses when pretrained once per run.
    pub pretrain_trace: Vec<PretrainStep>,
    pub config: TrainConfig,
}

impl RunReport {
    pub fn new(name: impl Into<String>, config: &TrainConfig, folds: Vec<FoldResult>, attribute_names: Vec<String>, n_subjects: usize) -> Self {
        Self {
            name: name.into(),
            n_folds: folds.len(),
            failed: folds.iter().any(|f| f.error.is_some()),
            summary: Summary::from_folds(&folds),
            folds,
            linear_oracle_acc: None,
            attribute_names,
            n_subjects,
            pretrain_trace: Vec::new(),
            config: config.clone(),
        }
    }

    /// One-line `ACC .. SEN .. SPE .. AUC ..` summary.
    pub fn summary_line(&self) -> String {
        Metrics::NAMES
            .iter()
            .map(|n| format!("{} {}", n.to_uppercase(), self.summary.formatted[*n]))
            .collect::<Vec<_>>()
            .join("  ")
    }

    /// Copy with every wall-clock field zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for f in &mut r.folds {
            f.wall_clock_s = 0.0;
        }
        r
    }
}
