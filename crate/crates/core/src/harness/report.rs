use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::experiments::Report;
use crate::error::{Error, Result};

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"))
}

/// `report.csv`: one row per model, split, seed and horizon.
pub fn report_csv(report: &Report, horizons: &[usize]) -> String {
    let mut out = String::from("model,split,seed,horizon,mse,msen,edge_accuracy,edge_f1,edge_permutation_accuracy,note\n");
    for r in &report.evaluations {
        let note = r.note.clone().unwrap_or_default().replace(',', ";");
        let edges = r.evaluation.as_ref().and_then(|e| e.edges.as_ref());
        let hs: Vec<usize> = match &r.evaluation {
            Some(e) => e.horizons.iter().map(|h| h.horizon).collect(),
            None => horizons.to_vec(),
        };
        for h in hs {
            let m = r
                .evaluation
                .as_ref()
                .and_then(|e| e.horizons.iter().find(|x| x.horizon == h));
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.label,
                r.split.as_str(),
                r.seed,
                h,
                fmt_opt(m.map(|m| m.mse)),
                fmt_opt(m.map(|m| m.msen)),
                fmt_opt(edges.map(|e| e.accuracy)),
                fmt_opt(edges.map(|e| e.f1)),
                fmt_opt(edges.map(|e| e.permutation_accuracy)),
                note
            );
        }
    }
    out
}

/// Seed-averaged cumulative MSE curves keyed by `(label, split)`.
pub fn mean_curves(report: &Report) -> BTreeMap<(String, String), Vec<f64>> {
    let mut sums: BTreeMap<(String, String), (Vec<f64>, usize)> = BTreeMap::new();
    for r in &report.evaluations {
        if let Some(e) = &r.evaluation {
            let entry = sums
                .entry((r.label.clone(), r.split.as_str().to_string()))
                .or_insert_with(|| (vec![0.0; e.curve.len()], 0));
            for (a, b) in entry.0.iter_mut().zip(&e.curve) {
                *a += b;
            }
            entry.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(k, (v, n))| (k, v.into_iter().map(|x| x / n as f64).collect()))
        .collect()
}

/// `curve_<model>_<split>.csv` with columns `step,cumulative_mse`.
pub fn curve_csv(curve: &[f64]) -> String {
    let mut out = String::from("step,cumulative_mse\n");
    for (i, v) in curve.iter().enumerate() {
        let _ = writeln!(out, "{},{v:.9e}", i + 1);
    }
    out
}

pub fn timing_csv(report: &Report) -> String {
    let mut out = String::from("model,ms_per_iteration,iterations,parameters,horizon\n");
    for t in &report.timings {
        let _ = writeln!(
            out,
            "{},{:.6},{},{},{}",
            t.model.as_str(),
            t.ms_per_iteration,
            t.iterations,
            t.parameters,
            t.horizon
        );
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `report.json`, `report.csv`, per-curve files, a combined
/// `curves_<split>.csv` per split and, when timings exist, `timing.csv`.
pub fn write_report(dir: &Path, report: &Report, horizons: &[usize]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("report.json");
    fs::write(&json, serde_json::to_vec_pretty(report)?).map_err(|e| Error::io(&json, e))?;
    write(&dir.join("report.csv"), &report_csv(report, horizons))?;
    let mut combined: BTreeMap<String, String> = BTreeMap::new();
    for ((label, split), curve) in mean_curves(report) {
        write(&dir.join(format!("curve_{label}_{split}.csv")), &curve_csv(&curve))?;
        let text = combined
            .entry(split)
            .or_insert_with(|| String::from("model,step,cumulative_mse\n"));
        for (i, v) in curve.iter().enumerate() {
            let _ = writeln!(text, "{label},{},{v:.9e}", i + 1);
        }
    }
    for (split, text) in combined {
        write(&dir.join(format!("curves_{split}.csv")), &text)?;
    }
    if !report.timings.is_empty() {
        write(&dir.join("timing.csv"), &timing_csv(report))?;
    }
    Ok(())
}
