//! Affinity metric reward system: pairwise reward, penalty and motivation
//! tables over phenotype attributes, simplex attribute weights, and the
//! resulting non-imaging affinity matrix with its value function.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{AttributeKind, Cohort, Split};
use crate::error::{Error, Result};
use crate::io::{write_matrix, write_text};
use crate::tape::{Tape, Var};

/// Guard added to the value function before taking its reciprocal.
pub const REWARD_EPS: f64 = 1e-8;

/// Per-attribute 0/1 tables. Totals are the sums over attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTables {
    pub reward: Vec<Array2<u8>>,
    pub penalty: Vec<Array2<u8>>,
    pub motivation: Vec<Array2<u8>>,
}

fn total(tables: &[Array2<u8>], n: usize) -> Array2<u32> {
    let mut out = Array2::zeros((n, n));
    for t in tables {
        out.zip_mut_with(t, |o, &x| *o += u32::from(x));
    }
    out
}

impl RewardTables {
    pub fn n_subjects(&self) -> usize {
        self.reward.first().map_or(0, |t| t.nrows())
    }

    pub fn n_attributes(&self) -> usize {
        self.reward.len()
    }

    pub fn reward_total(&self) -> Array2<u32> {
        total(&self.reward, self.n_subjects())
    }

    pub fn penalty_total(&self) -> Array2<u32> {
        total(&self.penalty, self.n_subjects())
    }

    pub fn motivation_total(&self) -> Array2<u32> {
        total(&self.motivation, self.n_subjects())
    }

    /// `beta_r R_u + beta_p P_u + beta_m M_u` for attribute `u`.
    pub fn signal(&self, u: usize, beta: &Beta) -> Array2<f64> {
        let n = self.n_subjects();
        Array2::from_shape_fn((n, n), |ij| {
            beta.reward * f64::from(self.reward[u][ij])
                + beta.penalty * f64::from(self.penalty[u][ij])
                + beta.motivation * f64::from(self.motivation[u][ij])
        })
    }

    /// `sum_ij ReLU(beta_r R_u + beta_p P_u)` for attribute `u`.
    pub fn relu_sum(&self, u: usize, beta: &Beta) -> f64 {
        self.reward[u]
            .iter()
            .zip(self.penalty[u].iter())
            .map(|(&r, &p)| (beta.reward * f64::from(r) + beta.penalty * f64::from(p)).max(0.0))
            .sum()
    }

    /// Writes `R`, `P`, `M` totals as numeric text matrices.
    pub fn export(&self, dir: &Path) -> Result<()> {
        let as_f64 = |m: Array2<u32>| m.mapv(f64::from);
        write_matrix(&dir.join("reward.txt"), &as_f64(self.reward_total()))?;
        write_matrix(&dir.join("penalty.txt"), &as_f64(self.penalty_total()))?;
        write_matrix(&dir.join("motivation.txt"), &as_f64(self.motivation_total()))
    }
}

/// Simplex weights parameterised by unconstrained logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaWeights {
    pub logits: Vec<f64>,
}

impl AlphaWeights {
    pub fn uniform(v: usize) -> Self {
        Self { logits: vec![0.0; v] }
    }

    pub fn weights(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    pub fn argmax(&self) -> usize {
        self.logits
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
            .0
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        let body: String = self.weights().iter().map(|a| format!("{a:.17e}\n")).collect();
        write_text(path, &body)
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beta {
    pub reward: f64,
    pub penalty: f64,
    pub motivation: f64,
}

impl Default for Beta {
    fn default() -> Self {
        Self {
            reward: 1.0,
            penalty: -2.0,
            motivation: 0.5,
        }
    }
}

impl Beta {
    pub fn validate(&self) -> Result<()> {
        if !(self.reward > 0.0 && self.penalty < 0.0 && self.motivation > 0.0) {
            return Err(Error::config(format!(
                "beta must satisfy beta_r > 0, beta_p < 0, beta_m > 0, got ({}, {}, {})",
                self.reward, self.penalty, self.motivation
            )));
        }
        if self.reward + self.motivation >= self.penalty.abs() {
            return Err(Error::config(format!(
                "beta must satisfy beta_r + beta_m < |beta_p|, got {} + {} >= {}",
                self.reward,
                self.motivation,
                self.penalty.abs()
            )));
        }
        Ok(())
    }
}

/// One coefficient triple per attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaCoefficients(pub Vec<Beta>);

impl BetaCoefficients {
    pub fn uniform(v: usize, beta: Beta) -> Self {
        Self(vec![beta; v])
    }

    pub fn validate(&self) -> Result<()> {
        self.0.iter().try_for_each(Beta::validate)
    }
}

/// Fills the tables from attribute agreement. Labels are read only for
/// pairs where neither subject is in the test split.
pub fn build_reward_tables(cohort: &Cohort, splits: &[Split]) -> Result<RewardTables> {
    let n = cohort.len();
    if splits.len() != n {
        return Err(Error::shape(format!("{} split entries for {n} subjects", splits.len())));
    }
    for attr in &cohort.schema.attributes {
        if let AttributeKind::Continuous { tolerance } = attr.kind {
            if !(tolerance.is_finite() && tolerance >= 0.0) {
                return Err(Error::config(format!(
                    "continuous attribute {} needs a finite non-negative match tolerance",
                    attr.name
                )));
            }
        }
    }
    let v = cohort.schema.len();
    let mut tables = RewardTables {
        reward: vec![Array2::zeros((n, n)); v],
        penalty: vec![Array2::zeros((n, n)); v],
        motivation: vec![Array2::zeros((n, n)); v],
    };
    let recs = &cohort.records;
    for i in 0..n {
        for j in (i + 1)..n {
            let test_i = splits[i] == Split::Test;
            let test_j = splits[j] == Split::Test;
            for (u, attr) in cohort.schema.attributes.iter().enumerate() {
                if !attr.matches(recs[i].phenotypes[u], recs[j].phenotypes[u]) {
                    continue;
                }
                let table = if test_i && test_j {
                    &mut tables.motivation[u]
                } else if test_i || test_j {
                    continue;
                } else if recs[i].label == recs[j].label {
                    &mut tables.reward[u]
                } else {
                    &mut tables.penalty[u]
                };
                table[[i, j]] = 1;
                table[[j, i]] = 1;
            }
        }
    }
    Ok(tables)
}

fn check_dims(tables: &RewardTables, alpha: &AlphaWeights, beta: &BetaCoefficients) -> Result<()> {
    let v = tables.n_attributes();
    if alpha.logits.len() != v || beta.0.len() != v {
        return Err(Error::shape(format!(
            "{v} attributes but {} alpha logits and {} beta triples",
            alpha.logits.len(),
            beta.0.len()
        )));
    }
    Ok(())
}

/// `C_ij = sigmoid(sum_u alpha_u (beta_r R_u + beta_p P_u + beta_m M_u))`.
pub fn compute_affinity_matrix(tables: &RewardTables, alpha: &AlphaWeights, beta: &BetaCoefficients) -> Result<Array2<f64>> {
    check_dims(tables, alpha, beta)?;
    let n = tables.n_subjects();
    let mut logit = Array2::<f64>::zeros((n, n));
    for (u, a) in alpha.weights().into_iter().enumerate() {
        logit.scaled_add(a, &tables.signal(u, &beta.0[u]));
    }
    Ok(logit.mapv(|x| 1.0 / (1.0 + (-x).exp())))
}

/// `Q = (1/N^2) sum_u alpha_u sum_ij ReLU(beta_r R_u + beta_p P_u)`.
pub fn compute_q_value(tables: &RewardTables, alpha: &AlphaWeights, beta: &BetaCoefficients) -> Result<f64> {
    check_dims(tables, alpha, beta)?;
    let n = tables.n_subjects() as f64;
    let q: f64 = alpha
        .weights()
        .iter()
        .enumerate()
        .map(|(u, a)| a * tables.relu_sum(u, &beta.0[u]))
        .sum();
    Ok(q / (n * n))
}

pub fn reward_loss(q_value: f64, epsilon_guard: f64) -> f64 {
    1.0 / (q_value + epsilon_guard)
}

/// Table-derived constants reused every epoch; only alpha changes.
#[derive(Debug, Clone)]
pub struct AmrsCache {
    signals: Vec<Array2<f64>>,
    relu_sums: Array2<f64>,
    n: usize,
}

impl AmrsCache {
    pub fn new(tables: &RewardTables, beta: &BetaCoefficients) -> Result<Self> {
        let v = tables.n_attributes();
        if beta.0.len() != v {
            return Err(Error::shape(format!("{v} attributes but {} beta triples", beta.0.len())));
        }
        Ok(Self {
            signals: (0..v).map(|u| tables.signal(u, &beta.0[u])).collect(),
            relu_sums: Array2::from_shape_fn((1, v), |(_, u)| tables.relu_sum(u, &beta.0[u])),
            n: tables.n_subjects(),
        })
    }

    /// Softmax of `logits` (`1 x v`) on the tape.
    pub fn alpha(&self, tape: &mut Tape, logits: Var) -> Var {
        tape.softmax_rows(logits)
    }

    /// Affinity matrix as a differentiable function of `alpha` (`1 x v`).
    pub fn affinity(&self, tape: &mut Tape, alpha: Var) -> Var {
        let mut acc: Option<Var> = None;
        for (u, signal) in self.signals.iter().enumerate() {
            let s = tape.constant(signal.clone());
            let a_u = tape.slice_cols(alpha, u, u + 1);
            let term = tape.mul(s, a_u);
            acc = Some(match acc {
                Some(prev) => tape.add(prev, term),
                None => term,
            });
        }
        let logit = acc.unwrap_or_else(|| tape.constant(Array2::zeros((self.n, self.n))));
        tape.sigmoid(logit)
    }

    pub fn q_value(&self, tape: &mut Tape, alpha: Var) -> Var {
        let s = tape.constant(self.relu_sums.clone());
        let weighted = tape.mul(alpha, s);
        let total = tape.sum(weighted);
        tape.scale(total, 1.0 / (self.n * self.n) as f64)
    }

    pub fn reward_loss(&self, tape: &mut Tape, alpha: Var) -> Var {
        let q = self.q_value(tape, alpha);
        tape.recip(q, REWARD_EPS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_cohort, AttributeSchema, PhenotypeValue, Schema, SubjectRecord, SyntheticAttribute, SyntheticSpec};
    use ndarray::array;
    use proptest::prelude::*;

    fn one_attr(r: u8, p: u8, m: u8) -> RewardTables {
        let t = |x: u8| array![[0, x], [x, 0]];
        RewardTables {
            reward: vec![t(r)],
            penalty: vec![t(p)],
            motivation: vec![t(m)],
        }
    }

    fn cohort(values: &[(usize, f64)], labels: &[u8]) -> Cohort {
        let schema = Schema::new(vec![
            AttributeSchema::categorical("site", ["KKI", "NYU", "PKU"]),
            AttributeSchema::continuous("age", 2.0),
        ]);
        let records = values
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (&(site, age), &label))| SubjectRecord {
                subject_id: format!("s{i}"),
                imaging_raw: vec![0.0],
                phenotypes: vec![PhenotypeValue::Category(site), PhenotypeValue::Real(age)],
                label,
            })
            .collect();
        Cohort::new(records, schema, 2).unwrap()
    }

    #[test]
    fn eq5_cases() {
        let c = cohort(&[(1, 10.0), (1, 30.0), (1, 50.0), (2, 11.0)], &[0, 0, 1, 1]);
        let t = build_reward_tables(&c, &[Split::Train; 4]).unwrap();
        assert_eq!((t.reward[0][[0, 1]], t.penalty[0][[0, 1]], t.motivation[0][[0, 1]]), (1, 0, 0));
        assert_eq!(t.penalty[0][[0, 2]], 1);
        assert_eq!((t.reward[0][[0, 3]], t.penalty[0][[0, 3]], t.motivation[0][[0, 3]]), (0, 0, 0));
        // ages 10 and 11 match within tolerance 2
        assert_eq!(t.penalty[1][[0, 3]], 1);
        assert_eq!(t.reward[1][[0, 1]], 0);
    }

    #[test]
    fn test_pairs_go_to_motivation_without_reading_labels() {
        let c = cohort(&[(0, 1.0), (0, 1.0), (0, 1.0)], &[0, 1, 0]);
        let splits = [Split::Train, Split::Test, Split::Test];
        let t = build_reward_tables(&c, &splits).unwrap();
        assert_eq!(t.motivation[0][[1, 2]], 1);
        assert_eq!(t.reward[0][[0, 1]] + t.penalty[0][[0, 1]] + t.motivation[0][[0, 1]], 0);
        let mut flipped = c.clone();
        flipped.records[1].label = 0;
        flipped.records[2].label = 1;
        assert_eq!(build_reward_tables(&flipped, &splits).unwrap(), t);
    }

    #[test]
    fn affinity_examples() {
        let beta = BetaCoefficients::uniform(1, Beta::default());
        let c = compute_affinity_matrix(&one_attr(0, 0, 0), &AlphaWeights::uniform(1), &beta).unwrap();
        assert!(c.iter().all(|&x| x == 0.5));
        let c = compute_affinity_matrix(&one_attr(1, 0, 0), &AlphaWeights::uniform(1), &beta).unwrap();
        assert!((c[[0, 1]] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert_eq!(c[[0, 0]], 0.5);
    }

    #[test]
    fn q_and_reward_loss_examples() {
        let beta = BetaCoefficients::uniform(1, Beta::default());
        let q = compute_q_value(&one_attr(1, 0, 0), &AlphaWeights::uniform(1), &beta).unwrap();
        assert!((q - 0.5).abs() < 1e-15);
        assert_eq!(compute_q_value(&one_attr(0, 1, 1), &AlphaWeights::uniform(1), &beta).unwrap(), 0.0);
        assert_eq!(reward_loss(0.5, 0.0), 2.0);
        assert!((reward_loss(0.0, 1e-8) - 1e8).abs() < 1e-4);
        assert_eq!(reward_loss(1.0, 0.0), reward_loss(0.5, 0.0) / 2.0);
    }

    #[test]
    fn beta_constraint() {
        assert!(Beta::default().validate().is_ok());
        let bad = Beta {
            reward: 1.5,
            penalty: -2.0,
            motivation: 0.5,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tape_versions_match_plain_functions() {
        let c = cohort(&[(0, 1.0), (0, 2.0), (1, 9.0), (0, 4.0), (1, 8.5)], &[0, 0, 1, 1, 1]);
        let t = build_reward_tables(&c, &[Split::Train, Split::Train, Split::Val, Split::Test, Split::Test]).unwrap();
        let beta = BetaCoefficients::uniform(2, Beta::default());
        let alpha = AlphaWeights { logits: vec![0.3, -0.4] };
        let cache = AmrsCache::new(&t, &beta).unwrap();
        let mut tape = Tape::new();
        let logits = tape.leaf(Array2::from_shape_vec((1, 2), alpha.logits.clone()).unwrap());
        let a = cache.alpha(&mut tape, logits);
        let cv = cache.affinity(&mut tape, a);
        let q = cache.q_value(&mut tape, a);
        let expected = compute_affinity_matrix(&t, &alpha, &beta).unwrap();
        assert!((tape.value(cv) - &expected).iter().all(|d| d.abs() < 1e-14));
        assert!((tape.item(q) - compute_q_value(&t, &alpha, &beta).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn reward_loss_gradient_matches_finite_differences() {
        let c = cohort(&[(0, 1.0), (0, 2.0), (1, 9.0), (0, 4.0), (1, 8.5), (1, 1.5)], &[0, 0, 1, 1, 1, 0]);
        let t = build_reward_tables(&c, &[Split::Train; 6]).unwrap();
        let beta = BetaCoefficients::uniform(2, Beta::default());
        let cache = AmrsCache::new(&t, &beta).unwrap();
        let loss_at = |logits: &[f64]| {
            let mut tape = Tape::new();
            let l = tape.leaf(Array2::from_shape_vec((1, 2), logits.to_vec()).unwrap());
            let a = cache.alpha(&mut tape, l);
            let lr = cache.reward_loss(&mut tape, a);
            let cv = cache.affinity(&mut tape, a);
            let cs = tape.sum(cv);
            let total = tape.add(lr, cs);
            (tape, l, total)
        };
        let x = [0.2, -0.7];
        let (tape, l, total) = loss_at(&x);
        let g = tape.backward(total).get(l).unwrap().clone();
        let h = 1e-5;
        for k in 0..2 {
            let mut up = x;
            let mut dn = x;
            up[k] += h;
            dn[k] -= h;
            let (tu, _, lu) = loss_at(&up);
            let (td, _, ld) = loss_at(&dn);
            let numeric = (tu.item(lu) - td.item(ld)) / (2.0 * h);
            let rel = (g[[0, k]] - numeric).abs() / numeric.abs().max(1e-8);
            assert!(rel <= 1e-4, "logit {k}: {} vs {numeric}", g[[0, k]]);
        }
    }

    #[test]
    fn informative_attribute_has_larger_relu_sum() {
        let beta = Beta::default();
        for seed in 0..10 {
            let sums: Vec<f64> = [0.0, 0.8]
                .iter()
                .map(|&info| {
                    let spec = SyntheticSpec {
                        n_subjects: 120,
                        n_roi: 6,
                        attributes: vec![SyntheticAttribute::binary("a0", info)],
                        n_informative_fc: 2,
                        seed,
                        ..SyntheticSpec::default()
                    };
                    let s = generate_synthetic_cohort(&spec).unwrap();
                    let t = build_reward_tables(&s.cohort, &vec![Split::Train; 120]).unwrap();
                    t.relu_sum(0, &beta)
                })
                .collect();
            assert!(sums[1] > sums[0], "seed {seed}: {sums:?}");
        }
    }

    /// Per-pair re-evaluation straight from the records.
    fn brute_force_affinity(c: &Cohort, splits: &[Split], alpha: &[f64], beta: &[Beta]) -> Array2<f64> {
        let n = c.len();
        Array2::from_shape_fn((n, n), |(i, j)| {
            let mut s = 0.0;
            if i != j {
                for (u, attr) in c.schema.attributes.iter().enumerate() {
                    let (a, b) = (c.records[i].phenotypes[u], c.records[j].phenotypes[u]);
                    let same = match attr.kind {
                        AttributeKind::Categorical { .. } => a == b,
                        AttributeKind::Continuous { tolerance } => (a.as_f64() - b.as_f64()).abs() <= tolerance,
                    };
                    if !same {
                        continue;
                    }
                    let both_test = splits[i] == Split::Test && splits[j] == Split::Test;
                    let any_test = splits[i] == Split::Test || splits[j] == Split::Test;
                    let x = if both_test {
                        beta[u].motivation
                    } else if any_test {
                        0.0
                    } else if c.records[i].label == c.records[j].label {
                        beta[u].reward
                    } else {
                        beta[u].penalty
                    };
                    s += alpha[u] * x;
                }
            }
            1.0 / (1.0 + (-s).exp())
        })
    }

    proptest! {
        #[test]
        fn affinity_equals_pairwise_oracle(
            n in 2usize..=12,
            raw in prop::collection::vec((0usize..3, 0.0f64..10.0, 0u8..2, 0u8..3), 12),
            logits in prop::collection::vec(-2.0f64..2.0, 2),
        ) {
            let rows = &raw[..n];
            let mut labels: Vec<u8> = rows.iter().map(|r| r.2).collect();
            labels[0] = 0;
            labels[1] = 1;
            let values: Vec<(usize, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
            let c = cohort(&values, &labels);
            let splits: Vec<Split> = rows.iter().map(|r| [Split::Train, Split::Val, Split::Test][r.3 as usize]).collect();
            let t = build_reward_tables(&c, &splits).unwrap();
            let beta = BetaCoefficients::uniform(2, Beta::default());
            let alpha = AlphaWeights { logits };
            let got = compute_affinity_matrix(&t, &alpha, &beta).unwrap();
            let want = brute_force_affinity(&c, &splits, &alpha.weights(), &beta.0);
            prop_assert!((&got - &want).iter().all(|d| d.abs() <= 1e-12));
            prop_assert_eq!(&got, &got.t().to_owned());
            for u in 0..2 {
                prop_assert!(t.reward[u].iter().zip(t.penalty[u].iter()).all(|(&r, &p)| r * p == 0));
            }
        }

        #[test]
        fn shifting_weight_to_larger_relu_sum_does_not_decrease_q(
            n in 2usize..=6,
            raw in prop::collection::vec((0usize..3, 0.0f64..6.0, 0u8..2), 6),
            a0 in 0.05f64..0.95,
        ) {
            let rows = &raw[..n];
            let mut labels: Vec<u8> = rows.iter().map(|r| r.2).collect();
            labels[0] = 0;
            labels[1] = 1;
            let values: Vec<(usize, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
            let c = cohort(&values, &labels);
            let t = build_reward_tables(&c, &vec![Split::Train; n]).unwrap();
            let beta = BetaCoefficients::uniform(2, Beta::default());
            let big = if t.relu_sum(0, &beta.0[0]) >= t.relu_sum(1, &beta.0[1]) { 0 } else { 1 };
            let mut w = [a0, 1.0 - a0];
            let before = compute_q_value(&t, &AlphaWeights { logits: w.map(f64::ln).to_vec() }, &beta).unwrap();
            w[big] *= 2.0;
            let after = compute_q_value(&t, &AlphaWeights { logits: w.map(f64::ln).to_vec() }, &beta).unwrap();
            prop_assert!(after >= before - 1e-15);
        }

        #[test]
        fn alpha_stays_on_simplex(logits in prop::collection::vec(-50.0f64..50.0, 1..6)) {
            let w = AlphaWeights { logits }.weights();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|&a| (0.0..=1.0).contains(&a)));
        }
    }
}
