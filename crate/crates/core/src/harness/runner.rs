use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{GraphKind, Modality, TrainConfig};
use super::features::{linear_oracle, prepare_fold, SharedInputs};
use super::report::{FoldResult, RunReport};
use super::train::{train_fold, FoldOutput};
use crate::align::ReconstructorKind;
use crate::data::{make_fold_plan, stratified_subsample, Cohort, FoldPlan};
use crate::encoder::Architecture;
use crate::error::{Error, Result};
use crate::io::{write_matrix, write_text};

/// Optional extras of a cross-validated run.
#[derive(Debug, Clone, Default)]
pub struct RunArtifacts {
    /// Directory receiving the report, predictions, embeddings and traces.
    /// Files are staged next to it and moved into place once complete.
    pub dir: Option<PathBuf>,
    /// Also evaluate the elimination plus linear classifier baseline.
    pub linear_oracle: bool,
}

/// Reconstructors and graph inputs shared by runs that differ only in
/// training knobs.
#[derive(Default)]
struct SharedCache {
    entries: Vec<(String, SharedInputs)>,
}

impl SharedCache {
    fn get(&mut self, cohort: &Cohort, config: &TrainConfig) -> Result<&SharedInputs> {
        let key = serde_json::json!([
            config.embed_dim,
            config.reconstructor,
            config.pretrain_lr,
            config.pretrain_weight_decay,
            config.pretrain_epochs,
            config.pretrain_train_only,
            config.seed,
            config.graph,
            config.sampling_ratio,
        ])
        .to_string();
        let pos = match self.entries.iter().position(|(k, _)| *k == key) {
            Some(p) => p,
            None => {
                self.entries.push((key, SharedInputs::new(cohort, config)?));
                self.entries.len() - 1
            }
        };
        Ok(&self.entries[pos].1)
    }
}

/// The cohort after stratified subsampling and its fold plan.
pub fn plan_run(cohort: &Cohort, config: &TrainConfig) -> Result<(Cohort, FoldPlan)> {
    let sampled = if config.sampling_ratio < 1.0 {
        cohort.subset(&stratified_subsample(&cohort.labels(), config.sampling_ratio, config.seed)?)?
    } else {
        cohort.clone()
    };
    let plan = make_fold_plan(&sampled.labels(), config.n_folds, config.seed)?;
    Ok((sampled, plan))
}

pub fn run_cross_validation(cohort: &Cohort, config: &TrainConfig) -> Result<RunReport> {
    run_cross_validation_with(cohort, config, "train-cv", &RunArtifacts::default())
}

pub fn run_cross_validation_with(cohort: &Cohort, config: &TrainConfig, name: &str, artifacts: &RunArtifacts) -> Result<RunReport> {
    run_cached(cohort, config, name, artifacts, &mut SharedCache::default())
}

fn run_cached(cohort: &Cohort, config: &TrainConfig, name: &str, artifacts: &RunArtifacts, cache: &mut SharedCache) -> Result<RunReport> {
    config.validate()?;
    cohort.validate()?;
    let (cohort, plan) = plan_run(cohort, config)?;
    let shared = cache.get(&cohort, config)?;
    log::info!("{name}: {} subjects, {} folds", cohort.len(), plan.n_folds);

    let run_fold = |k: usize| -> Result<FoldOutput> {
        let fold = &plan.folds[k];
        let features = prepare_fold(&cohort, fold, config, shared)?;
        let out = train_fold(&cohort, k, fold, &features, config)?;
        log::info!("{name} fold {k}: acc {:.4} (best epoch {}, {} epochs)", out.metrics.acc, out.best_epoch, out.epochs_run);
        Ok(out)
    };
    let outputs: Vec<Result<FoldOutput>> = if config.parallel_folds {
        (0..plan.n_folds).into_par_iter().map(run_fold).collect()
    } else {
        (0..plan.n_folds).map(run_fold).collect()
    };
    let folds: Vec<FoldResult> = outputs
        .iter()
        .enumerate()
        .map(|(k, o)| match o {
            Ok(out) => FoldResult::from_output(out),
            Err(e) => {
                log::error!("{name} fold {k} aborted: {e}");
                FoldResult::failed(k, e.to_string())
            }
        })
        .collect();
    let attribute_names = cohort.schema.attributes.iter().map(|a| a.name.clone()).collect();
    let mut report = RunReport::new(name, config, folds, attribute_names, cohort.len());
    report.pretrain_trace = shared.reconstructor.as_ref().map(|r| r.trace.clone()).unwrap_or_default();
    if artifacts.linear_oracle {
        let accs = plan
            .folds
            .iter()
            .map(|f| linear_oracle(&cohort, f, config))
            .collect::<Result<Vec<_>>>()?;
        report.linear_oracle_acc = Some(accs.iter().sum::<f64>() / accs.len() as f64);
    }
    if let Some(dir) = &artifacts.dir {
        write_run(dir, &report, &outputs)?;
    }
    Ok(report)
}

fn staging_path(dir: &Path) -> PathBuf {
    let mut name = dir.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    dir.with_file_name(name)
}

/// Writes every artifact of a run into `dir`, replacing it atomically.
fn write_run(dir: &Path, report: &RunReport, outputs: &[Result<FoldOutput>]) -> Result<()> {
    let stage = staging_path(dir);
    if stage.exists() {
        fs::remove_dir_all(&stage).map_err(|e| Error::io(&stage, e))?;
    }
    fs::create_dir_all(&stage).map_err(|e| Error::io(&stage, e))?;
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Runtime(e.to_string()))?;
    write_text(&stage.join("report.json"), &json)?;

    let mut contributions = String::from("fold,omega_img,omega_non");
    for a in &report.attribute_names {
        contributions.push_str(&format!(",alpha_{a}"));
    }
    contributions.push('\n');
    for f in &report.folds {
        contributions.push_str(&format!("{},{},{}", f.fold, f.omega_img, f.omega_non));
        for k in 0..report.attribute_names.len() {
            let a = f.alpha.as_ref().map_or(f64::NAN, |a| a[k]);
            contributions.push_str(&format!(",{a}"));
        }
        contributions.push('\n');
    }
    write_text(&stage.join("contributions.csv"), &contributions)?;

    if !report.pretrain_trace.is_empty() {
        let mut t = String::from("epoch,reconstruction,kl\n");
        for s in &report.pretrain_trace {
            t.push_str(&format!("{},{},{}\n", s.epoch, s.reconstruction, s.kl));
        }
        write_text(&stage.join("pretrain_trace.csv"), &t)?;
    }

    for out in outputs.iter().flatten() {
        let fd = stage.join(format!("fold_{:02}", out.fold));
        fs::create_dir_all(&fd).map_err(|e| Error::io(&fd, e))?;
        let mut p = String::from("subject_id,score,predicted,true\n");
        for r in &out.predictions {
            p.push_str(&format!("{},{},{},{}\n", r.subject_id, r.score, r.predicted, r.truth));
        }
        write_text(&fd.join("predictions.csv"), &p)?;
        let mut t = String::from("epoch,l_ce,l_smh_img,l_smh_non,l_deg,l_r,l_total,omega_img,omega_non,val_acc");
        if out.alpha.is_some() {
            for a in &report.attribute_names {
                t.push_str(&format!(",alpha_{a}"));
            }
        }
        t.push('\n');
        for e in &out.trace {
            t.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}",
                e.epoch, e.l_ce, e.l_smh_img, e.l_smh_non, e.l_deg, e.l_r, e.l_total, e.omega_img, e.omega_non, e.val_acc
            ));
            for a in &e.alpha {
                t.push_str(&format!(",{a}"));
            }
            t.push('\n');
        }
        write_text(&fd.join("loss_trace.csv"), &t)?;
        if let Some(z) = &out.embedding_img {
            write_matrix(&fd.join("embedding_imaging.txt"), z)?;
        }
        if let Some(z) = &out.embedding_non {
            write_matrix(&fd.join("embedding_nonimaging.txt"), z)?;
        }
        write_matrix(&fd.join("embedding_joint.txt"), &out.embedding_joint)?;
    }

    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&stage, dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    Architecture,
    Reconstructor,
    Modality,
    Graph,
}

impl Ablation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "architecture" => Ok(Self::Architecture),
            "reconstructor" => Ok(Self::Reconstructor),
            "modality" => Ok(Self::Modality),
            "graph" => Ok(Self::Graph),
            other => Err(Error::config(format!(
                "unknown ablation {other:?}; expected architecture, reconstructor, modality or graph"
            ))),
        }
    }

    /// Named configurations of every variant.
    pub fn variants(self, base: &TrainConfig) -> Vec<(String, TrainConfig)> {
        match self {
            Self::Architecture => Architecture::ALL
                .iter()
                .map(|&a| (a.name().to_string(), TrainConfig { architecture: a, ..base.clone() }))
                .collect(),
            Self::Reconstructor => [ReconstructorKind::Vae, ReconstructorKind::Mlp, ReconstructorKind::Ae, ReconstructorKind::None]
                .iter()
                .map(|&r| (r.name().to_string(), TrainConfig { reconstructor: r, ..base.clone() }))
                .collect(),
            Self::Modality => Modality::ALL
                .iter()
                .map(|&m| (m.name().to_string(), TrainConfig { modality: m, ..base.clone() }))
                .collect(),
            Self::Graph => GraphKind::ALL
                .iter()
                .map(|&g| (g.name().to_string(), TrainConfig { graph: g, ..base.clone() }))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    EmbedDim,
    PoolRatio,
    Sampling,
}

impl Sweep {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "embed-dim" => Ok(Self::EmbedDim),
            "pool-ratio" => Ok(Self::PoolRatio),
            "sampling" => Ok(Self::Sampling),
            other => Err(Error::config(format!(
                "unknown sweep {other:?}; expected embed-dim, pool-ratio or sampling"
            ))),
        }
    }
}

/// Grid of a sweep: embedding width 250..=2500 step 250, pooling ratio
/// 0.4..=1.0 step 0.1, sampling ratio 0.2..=1.0 step 0.2.
pub fn sweep_values(sweep: Sweep) -> Vec<f64> {
    match sweep {
        Sweep::EmbedDim => (1..=10).map(|k| 250.0 * k as f64).collect(),
        Sweep::PoolRatio => (4..=10).map(|k| k as f64 / 10.0).collect(),
        Sweep::Sampling => (1..=5).map(|k| k as f64 / 5.0).collect(),
    }
}

fn sweep_variants(sweep: Sweep, base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    sweep_values(sweep)
        .into_iter()
        .map(|v| match sweep {
            Sweep::EmbedDim => (format!("embed_dim_{v}"), TrainConfig { embed_dim: v as usize, ..base.clone() }),
            Sweep::PoolRatio => (format!("pool_ratio_{v:.1}"), TrainConfig { pool_ratio: v, ..base.clone() }),
            Sweep::Sampling => (format!("sampling_{v:.1}"), TrainConfig { sampling_ratio: v, ..base.clone() }),
        })
        .collect()
}

fn run_variants(cohort: &Cohort, variants: Vec<(String, TrainConfig)>, artifacts: &RunArtifacts) -> Result<Vec<RunReport>> {
    for (_, c) in &variants {
        c.validate()?;
    }
    let mut cache = SharedCache::default();
    variants
        .into_iter()
        .map(|(name, c)| {
            let opts = RunArtifacts {
                dir: artifacts.dir.as_ref().map(|d| d.join(&name)),
                linear_oracle: artifacts.linear_oracle,
            };
            run_cached(cohort, &c, &name, &opts, &mut cache)
        })
        .collect()
}

/// One report per variant of the ablation, each written to `dir/<variant>`.
pub fn ablate(cohort: &Cohort, base: &TrainConfig, ablation: Ablation, artifacts: &RunArtifacts) -> Result<Vec<RunReport>> {
    run_variants(cohort, ablation.variants(base), artifacts)
}

/// One report per grid value of the sweep, each written to `dir/<value>`.
pub fn sweep(cohort: &Cohort, base: &TrainConfig, sweep: Sweep, artifacts: &RunArtifacts) -> Result<Vec<RunReport>> {
    run_variants(cohort, sweep_variants(sweep, base), artifacts)
}
