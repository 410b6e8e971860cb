//! Top-k graph pooling with sigmoid score gating, and its inverse.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone)]
pub struct PoolRecord {
    /// Retained node indices in descending score order.
    pub idx: Vec<usize>,
    /// Projection scores of every input node.
    pub delta: Vec<f64>,
    pub pre_features: Var,
    pub pre_adjacency: Var,
}

/// `ceil(ratio * n)`, robust to the rounding of `ratio * n`.
pub fn pooled_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Indices of the `k` largest scores, ties to the lower index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// `delta = H p / |p|`; keeps the top `ceil(ratio N)` nodes, gates their
/// features by `sigmoid(delta)` and restricts the adjacency to them.
pub fn gpool(tape: &mut Tape, h: Var, a: Var, ratio: f64, score: Var) -> Result<(Var, Var, PoolRecord)> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::config(format!("pooling ratio must lie in (0,1], got {ratio}")));
    }
    let (n, d) = tape.shape(h);
    if tape.shape(score) != (d, 1) {
        return Err(Error::shape(format!("score vector {:?} for width {d}", tape.shape(score))));
    }
    let k = pooled_count(n, ratio);
    if k == 0 {
        return Err(Error::Runtime(format!("pooling {n} nodes at ratio {ratio} empties the graph")));
    }
    let sq = tape.square(score);
    let norm2 = tape.sum(sq);
    let norm = tape.sqrt(norm2);
    let inv = tape.recip(norm, 0.0);
    let proj = tape.matmul(h, score);
    let delta = tape.mul(proj, inv);
    let delta_values: Vec<f64> = tape.value(delta).iter().copied().collect();
    let idx = top_k(&delta_values, k);

    let kept = tape.gather_rows(h, &idx);
    let kept_delta = tape.gather_rows(delta, &idx);
    let gate = tape.sigmoid(kept_delta);
    let pooled = tape.mul(kept, gate);
    let a_pooled = tape.gather_sub(a, &idx);
    Ok((
        pooled,
        a_pooled,
        PoolRecord {
            idx,
            delta: delta_values,
            pre_features: h,
            pre_adjacency: a,
        },
    ))
}

/// Restores the pre-pooling node set: rows start from the skip snapshot and
/// the retained rows are overwritten by `h_small`.
pub fn gunpool(tape: &mut Tape, h_small: Var, record: &PoolRecord) -> Result<Var> {
    let (rows, width) = tape.shape(h_small);
    let (_, pre_width) = tape.shape(record.pre_features);
    if rows != record.idx.len() || width != pre_width {
        return Err(Error::shape(format!(
            "unpool input {rows}x{width} does not match record of {} rows and width {pre_width}",
            record.idx.len()
        )));
    }
    Ok(tape.scatter_rows(record.pre_features, h_small, &record.idx))
}
