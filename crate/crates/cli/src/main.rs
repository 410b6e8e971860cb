//! `mmgt`: pretraining, cross-validated training, ablations, sweeps,
//! synthetic data generation and report rendering.

mod config;
mod dataset;
mod manifest;
mod render;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmgt_core::align::pretrain_vae;
use mmgt_core::data::{generate_synthetic_cohort, Cohort, PhenotypeValue, SyntheticAttribute, SyntheticSpec};
use mmgt_core::harness::{ablate, pretrain_config, run_cross_validation_with, sweep, Ablation, RunArtifacts, RunReport, Sweep, TrainConfig};
use mmgt_core::io::{write_matrix, write_text};
use mmgt_core::{Error, Result};

use crate::config::{parse_override, read_config_file, resolve_config};
use crate::dataset::{AttributeSpec, Dataset, DatasetSpec};
use crate::manifest::RunManifest;

/// Environment variable naming the default artifact root.
const ARTIFACT_ROOT_VAR: &str = "MMGT_ARTIFACT_ROOT";

#[derive(Parser, Debug)]
#[command(name = "mmgt", version, about = "Multi-modal population-graph training for binary diagnosis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pretrain the phenotype reconstructor and save a checkpoint.
    PretrainVae(RunArgs),
    /// Cross-validated training and evaluation.
    TrainCv {
        #[command(flatten)]
        run: RunArgs,
        /// Also evaluate the elimination plus linear classifier baseline.
        #[arg(long)]
        oracle: bool,
    },
    /// One run per variant of an ablation axis.
    Ablate {
        /// architecture, reconstructor, modality or graph
        axis: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// One run per grid value of a sweep axis.
    Sweep {
        /// embed-dim, pool-ratio or sampling
        axis: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write a synthetic cohort and its dataset descriptor.
    SynthGen(SynthArgs),
    /// Render metric tables and plot data from a report.json.
    Report {
        report: PathBuf,
        /// Output directory; defaults to a `rendered` directory beside the report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Dataset descriptor (TOML).
    #[arg(long)]
    dataset: PathBuf,
    /// Config file (TOML, sections are flattened).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset preset installing its hyperparameters: abide or adhd200.
    #[arg(long)]
    preset: Option<String>,
    /// Config override `key=value`; repeatable, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Artifact directory; defaults to `$MMGT_ARTIFACT_ROOT/<command>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    subjects: usize,
    #[arg(long, default_value_t = 40)]
    rois: usize,
    /// Informativeness of each binary attribute, comma-separated.
    #[arg(long, default_value = "0.8,0,0", value_delimiter = ',')]
    informativeness: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    informative_fc: usize,
    #[arg(long, default_value_t = 0.35)]
    fc_shift: f64,
    #[arg(long, default_value_t = 0.5)]
    fc_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn artifact_dir(out: &Option<PathBuf>, command: &str) -> PathBuf {
    out.clone().unwrap_or_else(|| {
        std::env::var_os(ARTIFACT_ROOT_VAR)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("artifacts"))
            .join(command)
    })
}

/// Everything a run needs, resolved before any artifact is written.
struct Prepared {
    cohort: Cohort,
    config: TrainConfig,
    manifest: RunManifest,
}

fn prepare(run: &RunArgs) -> Result<Prepared> {
    let file = run.config.as_deref().map(read_config_file).transpose()?;
    let mut overrides = Vec::new();
    if let Some(p) = &run.preset {
        overrides.push(format!("preset={p}"));
    }
    overrides.extend(run.overrides.iter().cloned());
    let parsed = overrides.iter().map(|o| parse_override(o)).collect::<Result<Vec<_>>>()?;
    let config = resolve_config(file.as_ref(), &parsed)?;
    let dataset = Dataset::open(&run.dataset)?;
    let loaded = dataset.load()?;
    for w in &loaded.warnings {
        log::warn!("{w}");
    }
    let mut inputs = dataset.input_paths();
    inputs.extend(run.config.iter().cloned());
    let manifest = RunManifest::new(run.config.clone(), overrides, Some(config.clone()), &inputs)?;
    Ok(Prepared {
        cohort: loaded.cohort,
        config,
        manifest,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn run_failed(reports: &[RunReport]) -> Result<()> {
    let failed: Vec<&str> = reports.iter().filter(|r| r.failed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Runtime(format!("folds failed in {}", failed.join(", "))))
    }
}

fn pretrain(run: &RunArgs) -> Result<()> {
    let p = prepare(run)?;
    let phenotypes = p.cohort.phenotype_matrix();
    let rec = pretrain_vae(phenotypes.view(), p.config.embed_dim, &pretrain_config(&p.config, &p.cohort))?;
    let dir = artifact_dir(&run.out, "pretrain-vae");
    create_dir(&dir)?;
    let ckpt = dir.join("reconstructor.json");
    fs::write(&ckpt, rec.to_bytes()).map_err(|e| Error::io(&ckpt, e))?;
    let mut trace = String::from("epoch,reconstruction,kl\n");
    for s in &rec.trace {
        trace.push_str(&format!("{},{},{}\n", s.epoch, s.reconstruction, s.kl));
    }
    write_text(&dir.join("pretrain_trace.csv"), &trace)?;
    p.manifest.write(&dir)?;
    match rec.final_reconstruction_loss() {
        Some(l) => println!("pretrained {} reconstructor, final reconstruction loss {l:.6}", rec.kind.name()),
        None => println!("built {} reconstructor", rec.kind.name()),
    }
    println!("artifacts: {}", dir.display());
    Ok(())
}

fn train_cv(run: &RunArgs, oracle: bool) -> Result<()> {
    let p = prepare(run)?;
    let dir = artifact_dir(&run.out, "train-cv");
    let artifacts = RunArtifacts {
        dir: Some(dir.clone()),
        linear_oracle: oracle,
    };
    let report = run_cross_validation_with(&p.cohort, &p.config, "train-cv", &artifacts)?;
    p.manifest.write(&dir)?;
    println!("{}", report.summary_line());
    if let Some(o) = report.linear_oracle_acc {
        println!("linear baseline ACC {:.2}", 100.0 * o);
    }
    println!("artifacts: {}", dir.display());
    run_failed(&[report])
}

fn write_variant_manifests(manifest: &RunManifest, dir: &Path, reports: &[RunReport]) -> Result<()> {
    for r in reports {
        let mut m = manifest.clone();
        m.config = Some(r.config.clone());
        m.write(&dir.join(&r.name))?;
    }
    manifest.write(dir)
}

fn print_reports(reports: &[RunReport], dir: &Path) {
    for r in reports {
        println!("{:<24} {}", r.name, r.summary_line());
    }
    println!("artifacts: {}", dir.display());
}

fn run_ablation(axis: &str, run: &RunArgs) -> Result<()> {
    let ablation = Ablation::parse(axis)?;
    let p = prepare(run)?;
    let dir = artifact_dir(&run.out, &format!("ablate-{axis}"));
    let artifacts = RunArtifacts {
        dir: Some(dir.clone()),
        linear_oracle: false,
    };
    let reports = ablate(&p.cohort, &p.config, ablation, &artifacts)?;
    write_variant_manifests(&p.manifest, &dir, &reports)?;
    print_reports(&reports, &dir);
    run_failed(&reports)
}

fn run_sweep(axis: &str, run: &RunArgs) -> Result<()> {
    let grid = Sweep::parse(axis)?;
    let p = prepare(run)?;
    let dir = artifact_dir(&run.out, &format!("sweep-{axis}"));
    let artifacts = RunArtifacts {
        dir: Some(dir.clone()),
        linear_oracle: false,
    };
    let reports = sweep(&p.cohort, &p.config, grid, &artifacts)?;
    write_variant_manifests(&p.manifest, &dir, &reports)?;
    print_reports(&reports, &dir);
    run_failed(&reports)
}

fn synth_gen(args: &SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_subjects: args.subjects,
        n_roi: args.rois,
        attributes: args
            .informativeness
            .iter()
            .enumerate()
            .map(|(k, &i)| SyntheticAttribute::binary(format!("a{k}"), i))
            .collect(),
        n_informative_fc: args.informative_fc,
        fc_shift: args.fc_shift,
        fc_noise: args.fc_noise,
        seed: args.seed,
    };
    let syn = generate_synthetic_cohort(&spec)?;
    let cohort = &syn.cohort;
    create_dir(&args.out)?;

    let vocabularies: Vec<Vec<String>> = cohort
        .schema
        .attributes
        .iter()
        .map(|a| match &a.kind {
            mmgt_core::data::AttributeKind::Categorical { vocabulary } => vocabulary.clone(),
            mmgt_core::data::AttributeKind::Continuous { .. } => Vec::new(),
        })
        .collect();
    let mut table = String::from("subject_id,label");
    for a in &cohort.schema.attributes {
        table.push_str(&format!(",{}", a.name));
    }
    table.push('\n');
    for r in &cohort.records {
        table.push_str(&format!("{},{}", r.subject_id, r.label));
        for (u, v) in r.phenotypes.iter().enumerate() {
            match v {
                PhenotypeValue::Category(c) => table.push_str(&format!(",{}", vocabularies[u][*c])),
                PhenotypeValue::Real(x) => table.push_str(&format!(",{x}")),
            }
        }
        table.push('\n');
    }
    write_text(&args.out.join("phenotypes.csv"), &table)?;
    write_matrix(&args.out.join("imaging.txt"), &cohort.imaging_matrix())?;
    write_text(&args.out.join("subjects.txt"), &(cohort.subject_ids().join("\n") + "\n"))?;

    let descriptor = DatasetSpec {
        phenotypes: "phenotypes.csv".into(),
        imaging_dir: None,
        imaging_matrix: Some("imaging.txt".into()),
        imaging_index: Some("subjects.txt".into()),
        label_map: None,
        drop_missing: false,
        attributes: cohort
            .schema
            .attributes
            .iter()
            .zip(vocabularies)
            .map(|(a, vocabulary)| match a.kind {
                mmgt_core::data::AttributeKind::Categorical { .. } => AttributeSpec::Categorical {
                    name: a.name.clone(),
                    vocabulary,
                },
                mmgt_core::data::AttributeKind::Continuous { tolerance } => AttributeSpec::Continuous {
                    name: a.name.clone(),
                    tolerance,
                },
            })
            .collect(),
    };
    let toml = toml::to_string(&descriptor).map_err(|e| Error::Runtime(e.to_string()))?;
    write_text(&args.out.join("dataset.toml"), &toml)?;
    let truth = serde_json::json!({
        "spec": spec,
        "informative_features": syn.informative_features,
    });
    write_text(&args.out.join("truth.json"), &serde_json::to_string_pretty(&truth).map_err(|e| Error::Runtime(e.to_string()))?)?;
    println!("wrote {} subjects to {}", cohort.len(), args.out.display());
    Ok(())
}

fn report(path: &Path, out: &Option<PathBuf>) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: RunReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let dir = out
        .clone()
        .unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).join("rendered"));
    create_dir(&dir)?;
    for (name, content) in render::render(&report) {
        write_text(&dir.join(name), &content)?;
    }
    println!("{}", report.summary_line());
    println!("rendered: {}", dir.display());
    Ok(())
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::PretrainVae(run) => pretrain(run),
        Command::TrainCv { run, oracle } => train_cv(run, *oracle),
        Command::Ablate { axis, run } => run_ablation(axis, run),
        Command::Sweep { axis, run } => run_sweep(axis, run),
        Command::SynthGen(args) => synth_gen(args),
        Command::Report { report: path, out } => report(path, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
