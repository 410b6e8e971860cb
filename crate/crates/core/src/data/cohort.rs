//! Subject records, attribute schema and cohort validation.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::fc::fc_len;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AttributeKind {
    /// Ordinal codes follow the order of `vocabulary`, which is kept sorted.
    Categorical { vocabulary: Vec<String> },
    /// Two values "match" when they differ by at most `tolerance`.
    Continuous { tolerance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub kind: AttributeKind,
}

impl AttributeSchema {
    pub fn categorical<S: Into<String>>(name: impl Into<String>, vocabulary: impl IntoIterator<Item = S>) -> Self {
        let mut vocabulary: Vec<String> = vocabulary.into_iter().map(Into::into).collect();
        vocabulary.sort();
        vocabulary.dedup();
        Self {
            name: name.into(),
            kind: AttributeKind::Categorical { vocabulary },
        }
    }

    pub fn continuous(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Continuous { tolerance },
        }
    }

    /// Whether two encoded values of this attribute agree.
    pub fn matches(&self, a: PhenotypeValue, b: PhenotypeValue) -> bool {
        match (&self.kind, a, b) {
            (AttributeKind::Categorical { .. }, PhenotypeValue::Category(x), PhenotypeValue::Category(y)) => x == y,
            (AttributeKind::Continuous { tolerance }, PhenotypeValue::Real(x), PhenotypeValue::Real(y)) => {
                (x - y).abs() <= *tolerance
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub attributes: Vec<AttributeSchema>,
}

impl Schema {
    pub fn new(attributes: Vec<AttributeSchema>) -> Self {
        Self { attributes }
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for attr in &self.attributes {
            match &attr.kind {
                AttributeKind::Categorical { vocabulary } if vocabulary.is_empty() => {
                    return Err(Error::validation(format!("attribute {} has an empty vocabulary", attr.name)))
                }
                AttributeKind::Continuous { tolerance } if !(tolerance.is_finite() && *tolerance >= 0.0) => {
                    return Err(Error::validation(format!(
                        "attribute {} needs a finite nonnegative match tolerance",
                        attr.name
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PhenotypeValue {
    Category(usize),
    Real(f64),
}

impl PhenotypeValue {
    pub fn as_f64(self) -> f64 {
        match self {
            Self::Category(c) => c as f64,
            Self::Real(x) => x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    /// Flattened strict upper triangle of the connectivity matrix.
    pub imaging_raw: Vec<f64>,
    pub phenotypes: Vec<PhenotypeValue>,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub records: Vec<SubjectRecord>,
    pub schema: Schema,
    pub n_roi: usize,
}

impl Cohort {
    /// Builds a cohort and checks every record against the schema.
    pub fn new(records: Vec<SubjectRecord>, schema: Schema, n_roi: usize) -> Result<Self> {
        let cohort = Self { records, schema, n_roi };
        cohort.validate()?;
        Ok(cohort)
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.n_roi < 2 {
            return Err(Error::validation("n_roi must be at least 2"));
        }
        if self.records.len() < 2 {
            return Err(Error::validation(format!(
                "cohort needs at least 2 subjects with both labels, got {}",
                self.records.len()
            )));
        }
        let d1 = fc_len(self.n_roi);
        let v = self.schema.len();
        for rec in &self.records {
            if rec.label > 1 {
                return Err(Error::validation(format!("subject {}: label {} not in {{0,1}}", rec.subject_id, rec.label)));
            }
            if rec.imaging_raw.len() != d1 {
                return Err(Error::validation(format!(
                    "subject {}: imaging length {} != {d1} for {} ROIs",
                    rec.subject_id,
                    rec.imaging_raw.len(),
                    self.n_roi
                )));
            }
            if rec.imaging_raw.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(format!("subject {}: non-finite imaging value", rec.subject_id)));
            }
            if rec.phenotypes.len() != v {
                return Err(Error::validation(format!(
                    "subject {}: {} phenotype values, schema has {v}",
                    rec.subject_id,
                    rec.phenotypes.len()
                )));
            }
            for (attr, value) in self.schema.attributes.iter().zip(&rec.phenotypes) {
                match (&attr.kind, value) {
                    (AttributeKind::Categorical { vocabulary }, PhenotypeValue::Category(c)) if *c < vocabulary.len() => {}
                    (AttributeKind::Continuous { .. }, PhenotypeValue::Real(x)) if x.is_finite() => {}
                    _ => {
                        return Err(Error::validation(format!(
                            "subject {}: invalid value {value:?} for attribute {}",
                            rec.subject_id, attr.name
                        )))
                    }
                }
            }
        }
        let (n0, n1) = self.class_counts();
        if n0 == 0 || n1 == 0 {
            return Err(Error::validation(format!("both labels required, class counts are {n0}/{n1}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn imaging_dim(&self) -> usize {
        fc_len(self.n_roi)
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let n1 = self.records.iter().filter(|r| r.label == 1).count();
        (self.records.len() - n1, n1)
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.subject_id.clone()).collect()
    }

    /// `N x d1` imaging feature matrix.
    pub fn imaging_matrix(&self) -> Array2<f64> {
        let d1 = self.imaging_dim();
        Array2::from_shape_fn((self.len(), d1), |(i, j)| self.records[i].imaging_raw[j])
    }

    /// `N x v` encoded phenotype matrix.
    pub fn phenotype_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.len(), self.schema.len()), |(i, j)| self.records[i].phenotypes[j].as_f64())
    }

    /// Sub-cohort in the order of `idx`.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            idx.iter().map(|&i| self.records[i].clone()).collect(),
            self.schema.clone(),
            self.n_roi,
        )
    }
}
