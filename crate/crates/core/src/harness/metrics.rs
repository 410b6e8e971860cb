use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Test-set classification metrics; label 1 is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub sen: f64,
    pub spe: f64,
    pub auc: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 4] = ["acc", "sen", "spe", "auc"];

    pub fn nan() -> Self {
        Self {
            acc: f64::NAN,
            sen: f64::NAN,
            spe: f64::NAN,
            auc: f64::NAN,
        }
    }

    pub fn values(&self) -> [f64; 4] {
        [self.acc, self.sen, self.spe, self.auc]
    }

    pub fn from_values(v: [f64; 4]) -> Self {
        Self {
            acc: v[0],
            sen: v[1],
            spe: v[2],
            auc: v[3],
        }
    }
}

/// Probability of class 1 from two-column logits.
pub fn positive_scores(logits: &Array2<f64>) -> Vec<f64> {
    logits
        .rows()
        .into_iter()
        .map(|r| 1.0 / (1.0 + (r[0] - r[1]).exp()))
        .collect()
}

/// Rank-statistic AUC with ties counted one half; NaN for a single class.
pub fn auc(scores: &[f64], labels: &[u8]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == 0).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return f64::NAN;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &q in &neg {
            wins += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// ACC, SEN, SPE and AUC over `test_idx`. Undefined entries of a
/// single-class test set are NaN and logged.
pub fn evaluate_metrics(logits: &Array2<f64>, labels: &[u8], test_idx: &[usize]) -> Result<Metrics> {
    if test_idx.is_empty() {
        return Err(Error::validation("metrics need a nonempty test set"));
    }
    if logits.ncols() != 2 || logits.nrows() != labels.len() {
        return Err(Error::shape(format!("{:?} logits for {} labels", logits.dim(), labels.len())));
    }
    let scores = positive_scores(logits);
    let (mut tp, mut tn, mut fp, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for &i in test_idx {
        let pred = logits[[i, 1]] > logits[[i, 0]];
        match (labels[i] == 1, pred) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if a + b == 0 { f64::NAN } else { a as f64 / (a + b) as f64 };
    let m = Metrics {
        acc: (tp + tn) as f64 / test_idx.len() as f64,
        sen: ratio(tp, fn_),
        spe: ratio(tn, fp),
        auc: auc(
            &test_idx.iter().map(|&i| scores[i]).collect::<Vec<_>>(),
            &test_idx.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
        ),
    };
    if m.sen.is_nan() || m.spe.is_nan() {
        log::warn!("single-class test set: SEN/SPE/AUC undefined and excluded from aggregation");
    }
    Ok(m)
}

/// Mean and sample standard deviation of the finite entries; NaN when
/// none are finite, standard deviation 0 for a single entry.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    if finite.len() == 1 {
        return (mean, 0.0);
    }
    let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
