//! L2-regularised logistic regression on standardised features.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub l2: f64,
    pub iterations: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1e-2,
            iterations: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    /// Weights on standardised features.
    pub weights: Array1<f64>,
    pub bias: f64,
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Column means and standard deviations; zero deviations become 1.
pub fn column_stats(x: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("at least one row");
    let mut scale = x.std_axis(Axis(0), 0.0);
    scale.mapv_inplace(|s| if s > 1e-12 { s } else { 1.0 });
    (mean, scale)
}

fn standardize(x: ArrayView2<f64>, mean: &Array1<f64>, scale: &Array1<f64>) -> Array2<f64> {
    (&x - &mean.view().insert_axis(Axis(0))) / &scale.view().insert_axis(Axis(0))
}

/// Largest eigenvalue of `xᵀx` by power iteration.
fn gram_spectral_norm(x: &Array2<f64>) -> f64 {
    let mut v = Array1::from_elem(x.ncols(), 1.0 / (x.ncols() as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..50 {
        let w = x.t().dot(&x.dot(&v));
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = w / norm;
    }
    lambda
}

impl LogisticRegression {
    /// Accelerated gradient descent on the mean log-loss plus `l2/2 |w|^2`.
    pub fn fit(x: ArrayView2<f64>, labels: &[u8], config: &LogisticConfig) -> Result<Self> {
        let (n, p) = x.dim();
        if n != labels.len() {
            return Err(Error::shape(format!("{n} rows but {} labels", labels.len())));
        }
        let n1 = labels.iter().filter(|&&y| y == 1).count();
        if n1 == 0 || n1 == n {
            return Err(Error::validation("logistic regression needs both classes in the training set"));
        }
        let (mean, scale) = column_stats(x);
        let xs = standardize(x, &mean, &scale);
        let y = Array1::from_iter(labels.iter().map(|&l| l as f64));

        let lipschitz = 0.25 * (gram_spectral_norm(&xs) / n as f64 + 1.0) + config.l2;
        let step = 1.0 / lipschitz;

        let mut w = Array1::<f64>::zeros(p);
        let mut b = 0.0;
        let mut w_prev = w.clone();
        let mut b_prev = b;
        for t in 0..config.iterations {
            let momentum = t as f64 / (t as f64 + 3.0);
            let wy = &w + &((&w - &w_prev) * momentum);
            let by = b + momentum * (b - b_prev);
            let residual = (xs.dot(&wy) + by).mapv(sigmoid) - &y;
            let grad_w = xs.t().dot(&residual) / n as f64 + &wy * config.l2;
            let grad_b = residual.sum() / n as f64;
            w_prev = w;
            b_prev = b;
            w = &wy - &(grad_w * step);
            b = by - step * grad_b;
        }
        if !w.iter().all(|v| v.is_finite()) || !b.is_finite() {
            return Err(Error::NonFinite {
                component: "logistic regression".into(),
                detail: "weights diverged".into(),
            });
        }
        Ok(Self {
            weights: w,
            bias: b,
            mean,
            scale,
        })
    }

    pub fn decision(&self, x: ArrayView2<f64>) -> Array1<f64> {
        standardize(x, &self.mean, &self.scale).dot(&self.weights) + self.bias
    }

    /// Probability of label 1 per row.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.decision(x).mapv(sigmoid)
    }

    pub fn accuracy(&self, x: ArrayView2<f64>, labels: &[u8]) -> f64 {
        let p = self.predict_proba(x);
        let hits = p
            .iter()
            .zip(labels)
            .filter(|(&p, &y)| u8::from(p >= 0.5) == y)
            .count();
        hits as f64 / labels.len() as f64
    }
}
