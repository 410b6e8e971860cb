//! Seeded synthetic cohorts with controllable signal in both modalities.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::cohort::{AttributeSchema, Cohort, PhenotypeValue, Schema, SubjectRecord};
use super::fc::fc_len;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SyntheticKind {
    /// `levels` categories named `L0`, `L1`, ... The label-agreeing value has
    /// parity equal to the label.
    Categorical { levels: usize },
    /// Centred at `centers[s]` for sign label `s`, plus Gaussian jitter.
    Continuous { centers: (f64, f64), jitter: f64, tolerance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAttribute {
    pub name: String,
    pub kind: SyntheticKind,
    /// In [0, 1]; the attribute agrees with the label with probability
    /// `0.5 + informativeness / 2`.
    pub informativeness: f64,
}

impl SyntheticAttribute {
    pub fn binary(name: impl Into<String>, informativeness: f64) -> Self {
        Self {
            name: name.into(),
            kind: SyntheticKind::Categorical { levels: 2 },
            informativeness,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_subjects: usize,
    pub n_roi: usize,
    pub attributes: Vec<SyntheticAttribute>,
    /// Number of connectivity entries with a label-dependent mean shift.
    pub n_informative_fc: usize,
    /// Shift applied before the `tanh` squashing, `+shift` for label 1 and
    /// `-shift` for label 0.
    pub fc_shift: f64,
    pub fc_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_subjects: 200,
            n_roi: 40,
            attributes: vec![
                SyntheticAttribute::binary("a0", 0.8),
                SyntheticAttribute::binary("a1", 0.0),
                SyntheticAttribute::binary("a2", 0.0),
            ],
            n_informative_fc: 8,
            fc_shift: 0.35,
            fc_noise: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCohort {
    pub cohort: Cohort,
    /// Column indices of the shifted connectivity entries, ascending.
    pub informative_features: Vec<usize>,
    /// Per subject and attribute, whether the value was drawn to agree with
    /// the label.
    pub agreement: Vec<Vec<bool>>,
}

fn schema_for(attr: &SyntheticAttribute) -> AttributeSchema {
    match &attr.kind {
        SyntheticKind::Categorical { levels } => {
            // zero-padded so lexicographic order equals numeric order
            let width = levels.to_string().len();
            AttributeSchema::categorical(attr.name.clone(), (0..*levels).map(|l| format!("L{l:0width$}")))
        }
        SyntheticKind::Continuous { tolerance, .. } => AttributeSchema::continuous(attr.name.clone(), *tolerance),
    }
}

pub fn generate_synthetic_cohort(spec: &SyntheticSpec) -> Result<SyntheticCohort> {
    if spec.n_subjects < 4 {
        return Err(Error::validation(format!("synthetic cohort needs at least 4 subjects, got {}", spec.n_subjects)));
    }
    if spec.n_roi < 2 {
        return Err(Error::validation("synthetic cohort needs at least 2 ROIs"));
    }
    let d1 = fc_len(spec.n_roi);
    if spec.n_informative_fc > d1 {
        return Err(Error::validation(format!(
            "{} informative features requested but only {d1} connectivity entries",
            spec.n_informative_fc
        )));
    }
    for attr in &spec.attributes {
        if !(0.0..=1.0).contains(&attr.informativeness) {
            return Err(Error::validation(format!("informativeness of {} must lie in [0,1]", attr.name)));
        }
        if let SyntheticKind::Categorical { levels } = attr.kind {
            if levels < 2 {
                return Err(Error::validation(format!("attribute {} needs at least 2 levels", attr.name)));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_subjects;
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i >= n / 2)).collect();
    labels.shuffle(&mut rng);

    let mut columns: Vec<usize> = (0..d1).collect();
    columns.shuffle(&mut rng);
    let mut informative: Vec<usize> = columns[..spec.n_informative_fc].to_vec();
    informative.sort_unstable();
    let mut shift = vec![0.0; d1];
    for &c in &informative {
        shift[c] = spec.fc_shift;
    }
    // population-level connectivity profile shared by all subjects
    let base: Vec<f64> = (0..d1).map(|_| rng.random_range(-0.3..0.3)).collect();

    let schema = Schema::new(spec.attributes.iter().map(schema_for).collect());
    let mut records = Vec::with_capacity(n);
    let mut agreement = Vec::with_capacity(n);
    for (i, &y) in labels.iter().enumerate() {
        let sign = if y == 1 { 1.0 } else { -1.0 };
        let imaging_raw: Vec<f64> = (0..d1)
            .map(|f| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (base[f] + spec.fc_noise * z + sign * shift[f]).tanh()
            })
            .collect();

        let mut agrees = Vec::with_capacity(spec.attributes.len());
        let phenotypes = spec
            .attributes
            .iter()
            .map(|attr| {
                let agree = rng.random_bool(0.5 + attr.informativeness / 2.0);
                agrees.push(agree);
                let s = if agree { y as usize } else { 1 - y as usize };
                match &attr.kind {
                    SyntheticKind::Categorical { levels } => {
                        let same_parity: Vec<usize> = (0..*levels).filter(|l| l % 2 == s).collect();
                        let level = if same_parity.len() == 1 {
                            same_parity[0]
                        } else {
                            same_parity[rng.random_range(0..same_parity.len())]
                        };
                        PhenotypeValue::Category(level)
                    }
                    SyntheticKind::Continuous { centers, jitter, .. } => {
                        let center = if s == 1 { centers.1 } else { centers.0 };
                        let z: f64 = StandardNormal.sample(&mut rng);
                        PhenotypeValue::Real(center + jitter * z)
                    }
                }
            })
            .collect();
        agreement.push(agrees);
        records.push(SubjectRecord {
            subject_id: format!("sub-{i:05}"),
            imaging_raw,
            phenotypes,
            label: y,
        });
    }

    Ok(SyntheticCohort {
        cohort: Cohort::new(records, schema, spec.n_roi)?,
        informative_features: informative,
        agreement,
    })
}
