//! Stratified fold planning with train/validation/test splits.
//!
//! Subjects are dealt per class, round-robin and continuing across classes,
//! into `n_folds` chunks. Fold `k` tests on chunk `k` and validates on chunk
//! `k + n_folds / 2`; the rest trains. With ten folds this is the 8:1:1
//! split, and every chunk size stays within one of its exact share.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Fold {
    /// Role of every subject in this fold.
    pub fn split_of(&self, n: usize) -> Vec<Split> {
        let mut out = vec![Split::Train; n];
        for &i in &self.val {
            out[i] = Split::Val;
        }
        for &i in &self.test {
            out[i] = Split::Test;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
    pub n_folds: usize,
    pub seed: u64,
}

/// Assigns every subject to one of `n_chunks` stratified chunks.
fn stratified_chunks(labels: &[u8], n_chunks: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chunks = vec![Vec::new(); n_chunks];
    let mut cursor = 0;
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            chunks[cursor % n_chunks].push(i);
            cursor += 1;
        }
    }
    for c in &mut chunks {
        c.sort_unstable();
    }
    chunks
}

pub fn make_fold_plan(labels: &[u8], n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds < 3 {
        return Err(Error::validation(format!(
            "n_folds must be at least 3 to hold out disjoint validation and test chunks, got {n_folds}"
        )));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::validation("labels must be 0 or 1"));
    }
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = labels.len() - n1;
    if n0 < n_folds || n1 < n_folds {
        return Err(Error::validation(format!(
            "class too small to stratify: counts {n0}/{n1} with {n_folds} folds"
        )));
    }

    let chunks = stratified_chunks(labels, n_folds, seed);
    let offset = n_folds / 2;
    let folds = (0..n_folds)
        .map(|k| {
            let v = (k + offset) % n_folds;
            let mut train: Vec<usize> = (0..n_folds)
                .filter(|&c| c != k && c != v)
                .flat_map(|c| chunks[c].iter().copied())
                .collect();
            train.sort_unstable();
            Fold {
                train,
                val: chunks[v].clone(),
                test: chunks[k].clone(),
            }
        })
        .collect();
    Ok(FoldPlan { folds, n_folds, seed })
}

/// Stratified subsample of `ceil(ratio * N)` subjects, returned ascending.
pub fn stratified_subsample(labels: &[u8], ratio: f64, seed: u64) -> Result<Vec<usize>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::validation(format!("sampling ratio must lie in (0,1], got {ratio}")));
    }
    let n = labels.len();
    let target = ((ratio * n as f64) - 1e-9).ceil().max(1.0) as usize;
    if target >= n {
        return Ok((0..n).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = [0u8, 1]
        .iter()
        .map(|&c| {
            let mut m: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            m.shuffle(&mut rng);
            m
        })
        .collect();
    // largest-remainder apportionment of the target across classes
    let exact: Vec<f64> = by_class.iter().map(|m| m.len() as f64 * target as f64 / n as f64).collect();
    let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut remaining = target - take.iter().sum::<usize>();
    let mut order: Vec<usize> = vec![0, 1];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for c in order.into_iter().cycle() {
        if remaining == 0 {
            break;
        }
        if take[c] < by_class[c].len() {
            take[c] += 1;
            remaining -= 1;
        }
    }
    let mut out: Vec<usize> = by_class
        .iter_mut()
        .zip(&take)
        .flat_map(|(m, &t)| m.drain(..t).collect::<Vec<_>>())
        .collect();
    out.sort_unstable();
    Ok(out)
}
