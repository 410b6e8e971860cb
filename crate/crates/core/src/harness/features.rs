use ndarray::{concatenate, s, Array2, Axis};

use super::config::{GraphKind, Modality, TrainConfig};
use crate::align::linear::column_stats;
use crate::align::{apply_rfe, fit_rfe, pretrain_vae, LogisticConfig, LogisticRegression, PretrainConfig, RfeReducer, VariationalReconstructor};
use crate::amrs::{build_reward_tables, RewardTables};
use crate::data::{Cohort, Fold};
use crate::error::Result;
use crate::graph::{attribute_match_affinity, distance_matrix, sigma_from_distances, similarity_from_distances};

/// Fold-independent inputs computed once per run.
#[derive(Debug, Clone)]
pub struct SharedInputs {
    pub imaging: Array2<f64>,
    pub phenotypes: Array2<f64>,
    /// Reconstructor pretrained on every subject's phenotypes (labels unused).
    pub reconstructor: Option<VariationalReconstructor>,
    pub attribute_match: Option<Array2<f64>>,
}

impl SharedInputs {
    pub fn new(cohort: &Cohort, config: &TrainConfig) -> Result<Self> {
        let phenotypes = cohort.phenotype_matrix();
        let reconstructor = if config.pretrain_train_only {
            None
        } else {
            Some(pretrain_vae(phenotypes.view(), config.embed_dim, &pretrain_config(config, cohort))?)
        };
        Ok(Self {
            imaging: cohort.imaging_matrix(),
            phenotypes,
            reconstructor,
            attribute_match: (config.graph == GraphKind::AttributeMatch).then(|| attribute_match_affinity(cohort)),
        })
    }
}

fn cohort_id(cohort: &Cohort) -> String {
    format!("{} subjects, {} rois", cohort.len(), cohort.n_roi)
}

/// Reconstructor pretraining settings implied by a training config.
pub fn pretrain_config(config: &TrainConfig, cohort: &Cohort) -> PretrainConfig {
    PretrainConfig {
        kind: config.reconstructor,
        lr: config.pretrain_lr,
        weight_decay: config.pretrain_weight_decay,
        epochs: config.pretrain_epochs,
        seed: config.seed,
        cohort_id: cohort_id(cohort),
    }
}

/// Aligned node features and graph ingredients of one fold.
#[derive(Debug, Clone)]
pub struct FoldFeatures {
    /// `N x d` imaging features, standardised with training statistics.
    pub x_img: Array2<f64>,
    /// `N x d` non-imaging representation, standardised likewise.
    pub x_non: Array2<f64>,
    /// Off-diagonal kernel similarity of the concatenated features.
    pub similarity: Array2<f64>,
    pub sigma: f64,
    pub tables: Option<RewardTables>,
    /// Fixed affinity when the reward system is not in use.
    pub fixed_affinity: Option<Array2<f64>>,
    pub rfe: Option<RfeReducer>,
}

fn standardize_with(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let (mean, scale) = column_stats(x.select(Axis(0), rows).view());
    (x - &mean.insert_axis(Axis(0))) / &scale.insert_axis(Axis(0))
}

fn pad_to(x: Array2<f64>, width: usize) -> Array2<f64> {
    if x.ncols() >= width {
        return x;
    }
    let mut out = Array2::zeros((x.nrows(), width));
    out.slice_mut(s![.., ..x.ncols()]).assign(&x);
    out
}

fn train_labels(cohort: &Cohort, fold: &Fold) -> Vec<u8> {
    fold.train.iter().map(|&i| cohort.records[i].label).collect()
}

/// Imaging features reduced to `d` columns by elimination fitted on the
/// training split; zero-padded when there are at most `d` columns.
fn reduce_imaging(cohort: &Cohort, fold: &Fold, imaging: &Array2<f64>, config: &TrainConfig) -> Result<(Array2<f64>, Option<RfeReducer>)> {
    if config.embed_dim >= imaging.ncols() {
        return Ok((pad_to(imaging.clone(), config.embed_dim), None));
    }
    let train_x = imaging.select(Axis(0), &fold.train);
    let reducer = fit_rfe(train_x.view(), &train_labels(cohort, fold), config.embed_dim, config.rfe_step, config.seed)?;
    Ok((apply_rfe(&reducer, imaging.view())?, Some(reducer)))
}

pub fn prepare_fold(cohort: &Cohort, fold: &Fold, config: &TrainConfig, shared: &SharedInputs) -> Result<FoldFeatures> {
    let (img, rfe) = reduce_imaging(cohort, fold, &shared.imaging, config)?;
    let x_img = standardize_with(&img, &fold.train);

    let own;
    let reconstructor = match &shared.reconstructor {
        Some(r) => r,
        None => {
            let rows = shared.phenotypes.select(Axis(0), &fold.train);
            own = pretrain_vae(rows.view(), config.embed_dim, &pretrain_config(config, cohort))?;
            &own
        }
    };
    let non = reconstructor.encode_nonimaging(shared.phenotypes.view())?;
    let x_non = standardize_with(&non, &fold.train);

    let x_cat = match config.modality {
        Modality::Both => concatenate![Axis(1), x_img, x_non],
        Modality::Imaging => x_img.clone(),
        Modality::NonImaging => x_non.clone(),
    };
    let distances = distance_matrix(x_cat.view());
    let sigma = config.sigma.unwrap_or_else(|| sigma_from_distances(&distances, &fold.train));
    let similarity = similarity_from_distances(&distances, sigma)?;

    let n = cohort.len();
    let (tables, fixed_affinity) = match config.graph {
        GraphKind::Amrs => (Some(build_reward_tables(cohort, &fold.split_of(n))?), None),
        GraphKind::AttributeMatch => (
            None,
            Some(shared.attribute_match.clone().unwrap_or_else(|| attribute_match_affinity(cohort))),
        ),
        GraphKind::Similarity => (None, Some(Array2::ones((n, n)))),
    };
    Ok(FoldFeatures {
        x_img,
        x_non,
        similarity,
        sigma,
        tables,
        fixed_affinity,
        rfe,
    })
}

/// Test accuracy of elimination to `d` features followed by a logistic
/// classifier, both fitted on the training split.
pub fn linear_oracle(cohort: &Cohort, fold: &Fold, config: &TrainConfig) -> Result<f64> {
    let imaging = cohort.imaging_matrix();
    let (x, _) = reduce_imaging(cohort, fold, &imaging, config)?;
    let model = LogisticRegression::fit(
        x.select(Axis(0), &fold.train).view(),
        &train_labels(cohort, fold),
        &LogisticConfig::default(),
    )?;
    let test_labels: Vec<u8> = fold.test.iter().map(|&i| cohort.records[i].label).collect();
    Ok(model.accuracy(x.select(Axis(0), &fold.test).view(), &test_labels))
}
