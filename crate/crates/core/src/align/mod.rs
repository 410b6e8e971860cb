//! Bringing both modalities to a common width: feature elimination for the
//! connectivity features, a pretrained reconstructor for the phenotypes.

pub mod linear;
pub mod reconstructor;
pub mod rfe;

pub use linear::{LogisticConfig, LogisticRegression};
pub use reconstructor::{pretrain_vae, PretrainConfig, PretrainStep, ReconstructorKind, VariationalReconstructor};
pub use rfe::{apply_rfe, fit_rfe, RfeReducer};
