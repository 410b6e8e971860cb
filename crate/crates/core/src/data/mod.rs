//! Cohort ingestion: connectivity features, phenotype encoding, synthetic
//! cohorts and fold planning.

pub mod cohort;
pub mod fc;
pub mod folds;
pub mod load;
pub mod synthetic;

pub use cohort::{AttributeKind, AttributeSchema, Cohort, PhenotypeValue, Schema, SubjectRecord};
pub use fc::{compute_fc_vector, fc_len};
pub use folds::{make_fold_plan, stratified_subsample, Fold, FoldPlan, Split};
pub use load::{encode_phenotypes, load_cohort, ImagingSource, LabelMap, LoadOptions, LoadedCohort, RawPhenotypeRow};
pub use synthetic::{generate_synthetic_cohort, SyntheticAttribute, SyntheticCohort, SyntheticKind, SyntheticSpec};
