//! Per-fold training, evaluation metrics, cross-validation and the
//! ablation and sweep runners.

mod config;
mod features;
mod metrics;
mod report;
mod runner;
mod train;

pub use config::{GraphKind, Modality, Preset, TrainConfig};
pub use features::{linear_oracle, prepare_fold, pretrain_config, FoldFeatures, SharedInputs};
pub use metrics::{auc, evaluate_metrics, mean_std, Metrics};
pub use report::{format_mean_std, EpochRecord, FoldResult, RunReport, Summary};
pub use runner::{ablate, plan_run, run_cross_validation, run_cross_validation_with, sweep, sweep_values, Ablation, RunArtifacts, Sweep};
pub use train::{check_model_gradients, train_fold, FoldOutput, Model, Prediction};
