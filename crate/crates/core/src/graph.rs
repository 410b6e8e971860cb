//! Population graph assembly: correlation-distance kernel on concatenated
//! features, product with the affinity matrix, and symmetric edge dropout.

use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::io::{format_coo, write_text};
use crate::tape::{Tape, Var};

/// `1 - Pearson(x, y)`, or 1 when either vector has zero variance.
pub fn correlation_distance(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    let n = x.len() as f64;
    let mx = x.sum() / n;
    let my = y.sum() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y.iter()) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 1.0;
    }
    1.0 - (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// `exp(-rho^2 / (2 sigma^2))` with `rho` the correlation distance.
pub fn similarity_kernel(x: ArrayView1<f64>, y: ArrayView1<f64>, sigma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("kernel inputs of length {} and {}", x.len(), y.len())));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::validation(format!("kernel width must be positive, got {sigma}")));
    }
    let rho = correlation_distance(x, y);
    Ok((-rho * rho / (2.0 * sigma * sigma)).exp())
}

/// Pairwise correlation distances between rows.
pub fn distance_matrix(x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = correlation_distance(x.row(i), x.row(j));
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Mean correlation distance over distinct pairs of `idx`; 1 when that is
/// zero or there are fewer than two indices.
pub fn default_sigma(x: ArrayView2<f64>, idx: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            total += correlation_distance(x.row(i), x.row(j));
            count += 1;
        }
    }
    let mean = if count == 0 { 0.0 } else { total / count as f64 };
    if mean > 0.0 {
        mean
    } else {
        1.0
    }
}

/// [`default_sigma`] from a precomputed [`distance_matrix`].
pub fn sigma_from_distances(d: &Array2<f64>, idx: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            total += d[[i, j]];
            count += 1;
        }
    }
    let mean = if count == 0 { 0.0 } else { total / count as f64 };
    if mean > 0.0 {
        mean
    } else {
        1.0
    }
}

/// Kernel similarity for every pair, zero on the diagonal.
pub fn off_diagonal_similarity(x: ArrayView2<f64>, sigma: f64) -> Result<Array2<f64>> {
    similarity_from_distances(&distance_matrix(x), sigma)
}

/// [`off_diagonal_similarity`] from a precomputed [`distance_matrix`].
pub fn similarity_from_distances(d: &Array2<f64>, sigma: f64) -> Result<Array2<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::validation(format!("kernel width must be positive, got {sigma}")));
    }
    let mut s = d.mapv(|rho| (-rho * rho / (2.0 * sigma * sigma)).exp());
    s.diag_mut().fill(0.0);
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationGraph {
    pub x_img: Array2<f64>,
    pub x_non: Array2<f64>,
    pub x_cat: Array2<f64>,
    pub adjacency: Array2<f64>,
    pub affinity: Array2<f64>,
    pub sigma: f64,
}

impl PopulationGraph {
    pub fn n_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn export_coo(&self, path: &Path) -> Result<()> {
        write_text(path, &format_coo(&self.adjacency))
    }
}

fn check_affinity(c: &Array2<f64>, n: usize) -> Result<()> {
    if c.dim() != (n, n) {
        return Err(Error::shape(format!("affinity is {:?}, expected {n}x{n}", c.dim())));
    }
    if c.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::validation("affinity entries must lie in [0, 1]"));
    }
    Ok(())
}

/// `A_ij = Sim(x_i, x_j) C_ij` off the diagonal, `A_ii = 1`.
pub fn assemble_population_graph(x_img: &Array2<f64>, x_non: &Array2<f64>, c: &Array2<f64>, sigma: f64) -> Result<PopulationGraph> {
    let n = x_img.nrows();
    if x_non.nrows() != n {
        return Err(Error::shape(format!("{n} imaging rows but {} non-imaging rows", x_non.nrows())));
    }
    check_affinity(c, n)?;
    let x_cat = concatenate(Axis(1), &[x_img.view(), x_non.view()]).expect("row counts checked");
    let mut adjacency = off_diagonal_similarity(x_cat.view(), sigma)? * c;
    adjacency.diag_mut().fill(1.0);
    Ok(PopulationGraph {
        x_img: x_img.clone(),
        x_non: x_non.clone(),
        x_cat,
        adjacency,
        affinity: c.clone(),
        sigma,
    })
}

/// Symmetric keep-mask: each unordered off-diagonal pair survives with
/// probability `1 - p`; the diagonal is always kept.
pub fn edge_dropout_mask(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut mask = Array2::ones((n, n));
    if p <= 0.0 {
        return mask;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                mask[[i, j]] = 0.0;
                mask[[j, i]] = 0.0;
            }
        }
    }
    mask
}

/// Generator for the dropout draw of one epoch.
pub fn dropout_rng(seed: u64, epoch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    rng
}

pub fn apply_edge_dropout(a: &Array2<f64>, p: f64, seed: u64, training: bool) -> Result<Array2<f64>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::validation(format!("edge dropout rate must lie in [0,1), got {p}")));
    }
    if !training || p == 0.0 {
        return Ok(a.clone());
    }
    let mask = edge_dropout_mask(a.nrows(), p, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok(a * &mask)
}

/// Zeroes off-diagonal weights below `threshold`.
pub fn sparsify(a: &Array2<f64>, threshold: f64) -> Array2<f64> {
    let mut out = a.clone();
    for ((i, j), v) in out.indexed_iter_mut() {
        if i != j && *v < threshold {
            *v = 0.0;
        }
    }
    out
}

/// Differentiable adjacency `keep ⊙ Sim ⊙ C + I` where `weighted_sim`
/// already holds `keep ⊙ Sim` with a zero diagonal.
pub fn adjacency_on_tape(tape: &mut Tape, weighted_sim: &Array2<f64>, c: Var) -> Var {
    let n = weighted_sim.nrows();
    let s = tape.constant(weighted_sim.clone());
    let off = tape.mul(s, c);
    let eye = tape.constant(Array2::eye(n));
    tape.add(off, eye)
}

/// Source of the non-imaging affinity matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GraphMode {
    /// Learned reward-system affinity.
    Amrs,
    /// Fraction of matching attributes, fixed.
    AttributeMatch,
    /// Fixed matrix supplied by the caller.
    External(Array2<f64>),
}

impl GraphMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Amrs => "amrs",
            Self::AttributeMatch => "attribute-match",
            Self::External(_) => "external",
        }
    }
}

/// `C_ij` = fraction of attributes on which `i` and `j` match.
pub fn attribute_match_affinity(cohort: &Cohort) -> Array2<f64> {
    let n = cohort.len();
    let v = cohort.schema.len().max(1) as f64;
    let recs = &cohort.records;
    let mut c = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let hits = cohort
                .schema
                .attributes
                .iter()
                .enumerate()
                .filter(|(u, attr)| attr.matches(recs[i].phenotypes[*u], recs[j].phenotypes[*u]))
                .count();
            let val = hits as f64 / v;
            c[[i, j]] = val;
            c[[j, i]] = val;
        }
    }
    c.diag_mut().fill(1.0);
    c
}

/// Validates an externally supplied affinity matrix.
pub fn external_affinity(c: Array2<f64>, n: usize) -> Result<Array2<f64>> {
    check_affinity(&c, n)?;
    if (&c - &c.t()).iter().any(|d| d.abs() > 1e-12) {
        return Err(Error::validation("external affinity matrix must be symmetric"));
    }
    Ok(c)
}
