//! Metric tables and bar-plot data rendered from a run report.

use mmgt_core::harness::{mean_std, Metrics, RunReport};

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{:.2}", 100.0 * v)
    } else {
        "NaN".into()
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    mean_std(&values.collect::<Vec<_>>()).0
}

/// File name and content of every rendered output, in a fixed order.
pub fn render(report: &RunReport) -> Vec<(String, String)> {
    let mut md = format!("# {}\n\n{} subjects, {} folds", report.name, report.n_subjects, report.n_folds);
    if report.failed {
        md.push_str(", some folds FAILED");
    }
    md.push_str("\n\n| fold | ACC | SEN | SPE | AUC | best epoch |\n|---|---|---|---|---|---|\n");
    let mut csv = String::from("fold,acc,sen,spe,auc,best_epoch,epochs_run,error\n");
    for f in &report.folds {
        let v = f.metrics.values();
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            f.fold,
            cell(v[0]),
            cell(v[1]),
            cell(v[2]),
            cell(v[3]),
            f.best_epoch
        ));
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            f.fold,
            v[0],
            v[1],
            v[2],
            v[3],
            f.best_epoch,
            f.epochs_run,
            f.error.as_deref().unwrap_or("").replace([',', '\n'], " ")
        ));
    }
    let s = &report.summary.formatted;
    md.push_str(&format!(
        "| mean (std) | {} | {} | {} | {} | |\n",
        s["acc"], s["sen"], s["spe"], s["auc"]
    ));
    if let Some(o) = report.linear_oracle_acc {
        md.push_str(&format!("\nLinear baseline ACC: {}\n", cell(o)));
    }

    let ok: Vec<_> = report.folds.iter().filter(|f| f.error.is_none()).collect();
    let contributions = format!(
        "# modality mean_weight\nimaging {}\nnon-imaging {}\n",
        mean_of(ok.iter().map(|f| f.omega_img)),
        mean_of(ok.iter().map(|f| f.omega_non))
    );
    let mut alpha = String::from("# attribute mean_weight\n");
    for (k, name) in report.attribute_names.iter().enumerate() {
        let m = mean_of(ok.iter().filter_map(|f| f.alpha.as_ref().map(|a| a[k])));
        alpha.push_str(&format!("{name} {m}\n"));
    }
    let mut summary = String::from("# metric mean std\n");
    for (k, name) in Metrics::NAMES.iter().enumerate() {
        summary.push_str(&format!("{name} {} {}\n", report.summary.mean.values()[k], report.summary.std.values()[k]));
    }
    vec![
        ("metrics.md".into(), md),
        ("metrics.csv".into(), csv),
        ("summary.dat".into(), summary),
        ("contributions.dat".into(), contributions),
        ("alpha.dat".into(), alpha),
    ]
}
