use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Mode;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub active_fraction: f64,
    pub evaluations: usize,
    /// Seconds; excluded from the CSV outputs so they stay reproducible.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sparsity: Option<f64>,
    pub runs: Vec<RunRow>,
    pub mean_accuracy: f64,
    pub mean_active_pct: f64,
    /// Evaluation log lines per run.
    #[serde(skip)]
    pub logs: Vec<Vec<String>>,
}

impl RunReport {
    pub fn new(
        dataset: impl Into<String>,
        mode: Mode,
        sparsity: Option<f64>,
        runs: Vec<RunRow>,
        logs: Vec<Vec<String>>,
    ) -> Self {
        let n = runs.len().max(1) as f64;
        let mean_accuracy = runs.iter().map(|r| r.accuracy).sum::<f64>() / n;
        let mean_active_pct = 100.0 * runs.iter().map(|r| r.active_fraction).sum::<f64>() / n;
        RunReport {
            dataset: dataset.into(),
            mode,
            sparsity,
            runs,
            mean_accuracy,
            mean_active_pct,
            logs,
        }
    }

    pub fn mean_active_fraction(&self) -> f64 {
        self.mean_active_pct / 100.0
    }

    /// Loads `report.json`, or `<dir>/report.json` when given a directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut path = path.as_ref().to_path_buf();
        if path.is_dir() {
            path.push("report.json");
        }
        if !path.exists() {
            return Err(Error::MissingReport(path.display().to_string()));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-run rows without timings.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("run,seed,accuracy,active_fraction,evaluations\n");
        for r in &self.runs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.run, r.seed, r.accuracy, r.active_fraction, r.evaluations
            ));
        }
        out
    }
}

/// Fixed-point rendering with round-half-to-even at the last digit.
pub fn format_fixed(value: f64, decimals: u32) -> String {
    let scale = 10f64.powi(decimals as i32);
    let scaled = value * scale;
    let floor = scaled.floor();
    let diff = scaled - floor;
    let round_up = diff > 0.5 || (diff == 0.5 && floor % 2.0 != 0.0);
    let rounded = if round_up { floor + 1.0 } else { floor };
    let units = rounded as i64;
    let sign = if units < 0 { "-" } else { "" };
    let units = units.unsigned_abs();
    if decimals == 0 {
        return format!("{sign}{units}");
    }
    let div = 10u64.pow(decimals);
    format!(
        "{sign}{}.{:0width$}",
        units / div,
        units % div,
        width = decimals as usize
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub text: String,
    pub csv: String,
}

/// One column per method (in [`Mode::ALL`] order), two rows per dataset:
/// mean accuracy and mean active percentage, both to three decimals.
pub fn report_table(reports: &[RunReport]) -> ReportTable {
    let mut modes: Vec<Mode> = reports.iter().map(|r| r.mode).collect();
    modes.sort();
    modes.dedup();
    let mut by_dataset: BTreeMap<&str, BTreeMap<Mode, &RunReport>> = BTreeMap::new();
    for r in reports {
        by_dataset.entry(&r.dataset).or_default().insert(r.mode, r);
    }

    let mut header = vec!["dataset".to_string(), "metric".to_string()];
    header.extend(modes.iter().map(|m| m.name().to_string()));
    let mut rows = vec![header];
    for (dataset, cells) in &by_dataset {
        for (metric, pick) in [
            (
                "accuracy",
                (|r: &RunReport| r.mean_accuracy) as fn(&RunReport) -> f64,
            ),
            ("active_pct", |r: &RunReport| r.mean_active_pct),
        ] {
            let mut row = vec![dataset.to_string(), metric.to_string()];
            row.extend(modes.iter().map(|m| {
                cells
                    .get(m)
                    .map_or("-".into(), |r| format_fixed(pick(r), 3))
            }));
            rows.push(row);
        }
    }

    let csv = rows.iter().map(|r| r.join(",") + "\n").collect();
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let text = rows
        .iter()
        .map(|r| {
            let cells: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (v, &w))| {
                    if c < 2 {
                        format!("{v:<w$}")
                    } else {
                        format!("{v:>w$}")
                    }
                })
                .collect();
            cells.join("  ").trim_end().to_string() + "\n"
        })
        .collect();
    ReportTable { text, csv }
}
