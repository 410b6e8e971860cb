use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mmgt_core::data::{generate_synthetic_cohort, make_fold_plan, Cohort, SyntheticSpec};
use mmgt_core::harness::{
    prepare_fold, run_cross_validation, run_cross_validation_with, sweep_values, train_fold, Ablation, Model, Preset, RunArtifacts,
    RunReport, SharedInputs, Sweep, TrainConfig,
};

fn cohort(n: usize) -> Cohort {
    generate_synthetic_cohort(&SyntheticSpec {
        n_subjects: n,
        n_roi: 12,
        ..SyntheticSpec::default()
    })
    .unwrap()
    .cohort
}

fn config() -> TrainConfig {
    TrainConfig {
        embed_dim: 16,
        hidden_dim: 8,
        n_heads: 2,
        max_epochs: 6,
        patience: 6,
        pretrain_epochs: 10,
        n_folds: 3,
        ..TrainConfig::preset(Preset::Abide)
    }
}

#[test]
fn zero_epochs_returns_the_initial_state() {
    let c = cohort(30);
    let cfg = TrainConfig {
        max_epochs: 0,
        patience: 0,
        ..config()
    };
    let plan = make_fold_plan(&c.labels(), cfg.n_folds, 0).unwrap();
    let shared = SharedInputs::new(&c, &cfg).unwrap();
    let features = prepare_fold(&c, &plan.folds[1], &cfg, &shared).unwrap();
    let out = train_fold(&c, 1, &plan.folds[1], &features, &cfg).unwrap();
    assert_eq!((out.epochs_run, out.best_epoch), (0, 0));
    assert!(out.trace.is_empty());
    let fresh = Model::new(&cfg, c.schema.len(), &mut ChaCha8Rng::seed_from_u64(cfg.seed + 1)).unwrap();
    assert_eq!(out.model.store, fresh.store);
    assert_eq!(out.predictions.len(), plan.folds[1].test.len());
}

#[test]
fn identical_inputs_give_identical_reports() {
    let c = cohort(30);
    let a = run_cross_validation(&c, &config()).unwrap();
    let b = run_cross_validation(&c, &config()).unwrap();
    assert_eq!(a.without_timing(), b.without_timing());
}

#[test]
fn early_stopping_respects_patience() {
    let c = cohort(30);
    let cfg = TrainConfig {
        max_epochs: 12,
        patience: 2,
        ..config()
    };
    let report = run_cross_validation(&c, &cfg).unwrap();
    for f in &report.folds {
        assert!(f.epochs_run - f.best_epoch <= cfg.patience, "fold {}: {} vs {}", f.fold, f.epochs_run, f.best_epoch);
        assert_eq!(f.loss_trace.len(), f.epochs_run);
    }
}

#[test]
fn sampling_ratio_subsamples_before_folding() {
    let c = cohort(53);
    let cfg = TrainConfig {
        sampling_ratio: 0.2,
        max_epochs: 1,
        patience: 1,
        ..config()
    };
    let report = run_cross_validation(&c, &cfg).unwrap();
    assert_eq!(report.n_subjects, 11);
    assert_eq!(report.folds.len(), 3);
}

#[test]
fn ten_folds_give_ten_entries_and_a_summary_line() {
    let c = cohort(40);
    let cfg = TrainConfig {
        n_folds: 10,
        max_epochs: 1,
        patience: 1,
        ..config()
    };
    let report = run_cross_validation(&c, &cfg).unwrap();
    assert_eq!((report.folds.len(), report.n_folds), (10, 10));
    let line = report.summary_line();
    assert!(line.starts_with("ACC "), "{line}");
    let acc = &report.summary.formatted["acc"];
    let (mean, std) = acc.split_once(" (").unwrap();
    assert!(mean.parse::<f64>().is_ok() && std.trim_end_matches(')').parse::<f64>().is_ok(), "{acc}");
    for f in &report.folds {
        for v in f.metrics.values() {
            assert!(v.is_nan() || (0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn diverging_folds_are_reported_as_failed() {
    let c = cohort(30);
    let cfg = TrainConfig {
        lr: 1e300,
        ..config()
    };
    let report = run_cross_validation(&c, &cfg).unwrap();
    assert!(report.failed);
    assert_eq!(report.folds.len(), 3);
    assert!(report.folds.iter().all(|f| f.error.as_deref().is_some_and(|e| e.contains("non-finite"))));
}

#[test]
fn run_artifacts_are_complete() {
    let c = cohort(30);
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let artifacts = RunArtifacts {
        dir: Some(dir.clone()),
        linear_oracle: true,
    };
    let report = run_cross_validation_with(&c, &config(), "run", &artifacts).unwrap();
    assert!(report.linear_oracle_acc.is_some_and(|a| (0.0..=1.0).contains(&a)));
    let stored: RunReport = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(stored, report);
    assert!(dir.join("contributions.csv").is_file());
    assert!(dir.join("pretrain_trace.csv").is_file());
    assert!(!tmp.path().join("run.partial").exists());
    let plan = make_fold_plan(&c.labels(), 3, 0).unwrap();
    for k in 0..3 {
        let fd = dir.join(format!("fold_{k:02}"));
        let predictions = std::fs::read_to_string(fd.join("predictions.csv")).unwrap();
        assert!(predictions.starts_with("subject_id,score,predicted,true\n"));
        assert_eq!(predictions.lines().count(), 1 + plan.folds[k].test.len());
        let trace = std::fs::read_to_string(fd.join("loss_trace.csv")).unwrap();
        assert!(trace.lines().next().unwrap().ends_with("alpha_a0,alpha_a1,alpha_a2"));
        for name in ["embedding_imaging.txt", "embedding_nonimaging.txt", "embedding_joint.txt"] {
            let rows = std::fs::read_to_string(fd.join(name)).unwrap().lines().count();
            assert_eq!(rows, 30, "{name}");
        }
    }
}

#[test]
fn ablation_and_sweep_grids() {
    let base = config();
    assert_eq!(Ablation::Architecture.variants(&base).len(), 4);
    assert_eq!(Ablation::Modality.variants(&base).len(), 3);
    assert_eq!(Ablation::Graph.variants(&base).len(), 3);
    assert!(Ablation::Reconstructor.variants(&base).len() >= 2);
    assert_eq!(sweep_values(Sweep::EmbedDim), (1..=10).map(|k| 250.0 * k as f64).collect::<Vec<_>>());
    assert_eq!(sweep_values(Sweep::PoolRatio).len(), 7);
    assert_eq!(sweep_values(Sweep::Sampling).len(), 5);
    assert!(Ablation::parse("architecture").is_ok() && Ablation::parse("depth").is_err());
    assert!(Sweep::parse("pool-ratio").is_ok() && Sweep::parse("lr").is_err());
}
