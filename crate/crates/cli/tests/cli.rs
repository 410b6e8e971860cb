use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mmgt(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmgt"))
        .args(args)
        .env("MMGT_ARTIFACT_ROOT", root.join("artifacts"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small fast settings shared by the training commands.
const FAST: &[&str] = &[
    "--set", "embed_dim=16",
    "--set", "hidden_dim=8",
    "--set", "n_heads=2",
    "--set", "max_epochs=2",
    "--set", "patience=2",
    "--set", "pretrain_epochs=5",
    "--set", "n_folds=3",
];

fn synth(root: &Path) -> String {
    let data = root.join("data");
    let o = mmgt(
        &["synth-gen", "--out", data.to_str().unwrap(), "--subjects", "30", "--rois", "8", "--seed", "3"],
        root,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    data.join("dataset.toml").to_str().unwrap().to_string()
}

fn run(root: &Path, head: &[&str], dataset: &str, extra: &[&str]) -> Output {
    let mut args: Vec<&str> = head.to_vec();
    args.extend(["--dataset", dataset]);
    args.extend(FAST);
    args.extend(extra);
    mmgt(&args, root)
}

#[test]
fn synth_gen_writes_a_loadable_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = synth(tmp.path());
    let data = tmp.path().join("data");
    for f in ["phenotypes.csv", "imaging.txt", "subjects.txt", "truth.json"] {
        assert!(data.join(f).is_file(), "{f}");
    }
    let table = fs::read_to_string(data.join("phenotypes.csv")).unwrap();
    assert!(table.starts_with("subject_id,label,a0,a1,a2\n"));
    assert_eq!(table.lines().count(), 31);
    let o = run(tmp.path(), &["pretrain-vae"], &dataset, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = tmp.path().join("artifacts/pretrain-vae");
    assert!(dir.join("reconstructor.json").is_file());
    assert!(dir.join("manifest.json").is_file());
}

#[test]
fn train_cv_writes_report_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = synth(tmp.path());
    let out = tmp.path().join("cv");
    let o = run(tmp.path(), &["train-cv", "--preset", "adhd200"], &dataset, &["--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("ACC "), "{}", stdout(&o));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["mu"], 0.1);
    assert_eq!(manifest["config"]["embed_dim"], 16);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 4);
    assert!(manifest["inputs"][0]["sha256"].as_str().unwrap().len() == 64);
    let artifacts: Vec<&str> = manifest["artifacts"].as_array().unwrap().iter().map(|a| a.as_str().unwrap()).collect();
    assert!(artifacts.contains(&"report.json") && artifacts.contains(&"fold_02/predictions.csv"));

    let rendered = tmp.path().join("rendered");
    let o = mmgt(&["report", out.join("report.json").to_str().unwrap(), "--out", rendered.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["metrics.md", "metrics.csv", "summary.dat", "contributions.dat", "alpha.dat"] {
        assert!(rendered.join(f).is_file(), "{f}");
    }
    let first = fs::read_to_string(rendered.join("metrics.md")).unwrap();
    let o = mmgt(&["report", out.join("report.json").to_str().unwrap(), "--out", rendered.to_str().unwrap()], tmp.path());
    assert!(o.status.success());
    assert_eq!(first, fs::read_to_string(rendered.join("metrics.md")).unwrap());
    assert!(first.contains("| mean (std) |"));
}

#[test]
fn artifact_root_variable_sets_the_default_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = synth(tmp.path());
    let o = run(tmp.path(), &["train-cv"], &dataset, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("artifacts/train-cv/report.json").is_file());
}

#[test]
fn ablate_architecture_gives_four_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = synth(tmp.path());
    let out = tmp.path().join("abl");
    let o = run(tmp.path(), &["ablate", "architecture"], &dataset, &["--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let reports = fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().join("report.json").is_file()).count();
    assert_eq!(reports, 4);
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn sweep_pool_ratio_gives_seven_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = synth(tmp.path());
    let out = tmp.path().join("sw");
    let o = run(tmp.path(), &["sweep", "pool-ratio"], &dataset, &["--out", out.to_str().unwrap(), "--set", "max_epochs=1", "--set", "patience=1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let reports = fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().join("report.json").is_file()).count();
    assert_eq!(reports, 7);
}

#[test]
fn missing_phenotype_file_fails_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = synth(tmp.path());
    fs::remove_file(tmp.path().join("data/phenotypes.csv")).unwrap();
    let out = tmp.path().join("cv");
    let o = run(tmp.path(), &["train-cv"], &dataset, &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(!out.exists());
    assert!(!tmp.path().join("cv.partial").exists());
}

#[test]
fn configuration_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = synth(tmp.path());
    for bad in ["pool_ratio=1.5", "no_such_key=1", "beta_reward=3", "max_epochs=abc"] {
        let o = run(tmp.path(), &["train-cv"], &dataset, &["--set", bad]);
        assert_eq!(o.status.code(), Some(1), "{bad}: {}", stderr(&o));
    }
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "[training]\nlearning_rate = 0.1\n").unwrap();
    let o = run(tmp.path(), &["train-cv", "--config", cfg.to_str().unwrap()], &dataset, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
    assert_eq!(mmgt(&["ablate", "depth", "--dataset", &dataset], tmp.path()).status.code(), Some(1));
    assert_eq!(mmgt(&["frobnicate"], tmp.path()).status.code(), Some(1));
    assert_eq!(mmgt(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn diverging_training_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = synth(tmp.path());
    let out = tmp.path().join("cv");
    let o = run(tmp.path(), &["train-cv"], &dataset, &["--out", out.to_str().unwrap(), "--set", "lr=1e300"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["failed"], true);
}
