//! Recursive feature elimination driven by a linear classifier.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::linear::{LogisticConfig, LogisticRegression};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeReducer {
    pub selected_mask: Vec<bool>,
    pub target_dim: usize,
    /// Fraction of the surviving features removed per round.
    pub elimination_step: f64,
    pub fit_seed: u64,
}

impl RfeReducer {
    pub fn selected_indices(&self) -> Vec<usize> {
        self.selected_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &keep)| keep.then_some(i))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.selected_mask.len()
    }
}

/// Repeatedly fits the classifier on the surviving columns and removes the
/// `step` fraction with the smallest absolute weight until `target_dim`
/// remain. Weight ties remove the higher column index first.
pub fn fit_rfe(train_features: ArrayView2<f64>, train_labels: &[u8], target_dim: usize, step: f64, seed: u64) -> Result<RfeReducer> {
    let d1 = train_features.ncols();
    if target_dim == 0 || target_dim >= d1 {
        return Err(Error::validation(format!(
            "RFE target dimension {target_dim} must lie in [1, {d1}) for {d1} input features"
        )));
    }
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::validation(format!("elimination step {step} must lie in (0,1)")));
    }
    if train_labels.iter().any(|&y| y > 1) {
        return Err(Error::validation("RFE labels must be binary"));
    }
    let config = LogisticConfig::default();
    let mut surviving: Vec<usize> = (0..d1).collect();
    while surviving.len() > target_dim {
        let sub = train_features.select(Axis(1), &surviving);
        let model = LogisticRegression::fit(sub.view(), train_labels, &config)?;
        let n_remove = ((surviving.len() as f64 * step).ceil() as usize)
            .max(1)
            .min(surviving.len() - target_dim);
        let mut order: Vec<usize> = (0..surviving.len()).collect();
        order.sort_by(|&a, &b| {
            model.weights[a]
                .abs()
                .total_cmp(&model.weights[b].abs())
                .then(b.cmp(&a))
        });
        let mut drop = vec![false; surviving.len()];
        for &k in &order[..n_remove] {
            drop[k] = true;
        }
        surviving = surviving
            .into_iter()
            .zip(drop)
            .filter_map(|(c, d)| (!d).then_some(c))
            .collect();
    }
    let mut selected_mask = vec![false; d1];
    for c in surviving {
        selected_mask[c] = true;
    }
    Ok(RfeReducer {
        selected_mask,
        target_dim,
        elimination_step: step,
        fit_seed: seed,
    })
}

/// Keeps the selected columns, in original order.
pub fn apply_rfe(reducer: &RfeReducer, features: ArrayView2<f64>) -> Result<Array2<f64>> {
    if features.ncols() != reducer.input_dim() {
        return Err(Error::shape(format!(
            "reducer fitted on {} columns, got {}",
            reducer.input_dim(),
            features.ncols()
        )));
    }
    Ok(features.select(Axis(1), &reducer.selected_indices()))
}
