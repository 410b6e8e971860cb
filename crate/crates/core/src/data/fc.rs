//! Functional-connectivity features from ROI time series.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Number of strict upper-triangle entries of an `n_roi x n_roi` matrix.
pub fn fc_len(n_roi: usize) -> usize {
    n_roi * n_roi.saturating_sub(1) / 2
}

/// Inverse of [`fc_len`], if `len` is a triangular number.
pub fn n_roi_for_len(len: usize) -> Option<usize> {
    let n = ((1.0 + (1.0 + 8.0 * len as f64).sqrt()) / 2.0).round() as usize;
    (fc_len(n) == len && n >= 2).then_some(n)
}

/// Pearson correlation of every ROI pair, flattened row-major over the
/// strict upper triangle. Rows are ROIs, columns are time points. A
/// constant row correlates 0 with everything.
pub fn compute_fc_vector(timeseries: ArrayView2<f64>) -> Result<Vec<f64>> {
    let (n_roi, t) = timeseries.dim();
    if n_roi < 2 {
        return Err(Error::validation(format!("need at least 2 ROIs, got {n_roi}")));
    }
    if t < 3 {
        return Err(Error::validation(format!("need at least 3 time points, got {t}")));
    }
    if timeseries.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("time series contains non-finite values"));
    }

    let mut centered = timeseries.to_owned();
    let mut norms = vec![0.0; n_roi];
    for (mut row, norm) in centered.rows_mut().into_iter().zip(norms.iter_mut()) {
        let mean = row.sum() / t as f64;
        row.mapv_inplace(|v| v - mean);
        *norm = row.dot(&row).sqrt();
    }

    let mut out = Vec::with_capacity(fc_len(n_roi));
    for i in 0..n_roi {
        for j in (i + 1)..n_roi {
            let denom = norms[i] * norms[j];
            let r = if denom > 0.0 {
                (centered.row(i).dot(&centered.row(j)) / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            out.push(r);
        }
    }
    Ok(out)
}

/// Strict upper triangle of a square matrix, row-major.
pub fn upper_triangle(m: &Array2<f64>) -> Result<Vec<f64>> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::shape(format!("expected a square matrix, got {r}x{c}")));
    }
    let mut out = Vec::with_capacity(fc_len(r));
    for i in 0..r {
        for j in (i + 1)..r {
            out.push(m[[i, j]]);
        }
    }
    Ok(out)
}

/// Whether `m` looks like a connectivity matrix rather than a time series:
/// square, symmetric and unit diagonal.
pub fn looks_like_fc_matrix(m: &Array2<f64>) -> bool {
    let (r, c) = m.dim();
    if r != c || r < 2 {
        return false;
    }
    (0..r).all(|i| (m[[i, i]] - 1.0).abs() < 1e-6)
        && (0..r).all(|i| ((i + 1)..r).all(|j| (m[[i, j]] - m[[j, i]]).abs() < 1e-9))
}
