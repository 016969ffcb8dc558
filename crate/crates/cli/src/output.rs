//! File emission: atomic writes, report files, and the machine-readable
//! summary printed under `--json`.

use anyhow::{Context, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use strain_sense_core::train::{SweepTable, TrainReport};

/// One summary object per invocation; the shape is pinned by
/// `schema/summary.schema.json` at the repository root.
#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: &'static str,
    pub status: &'static str,
    pub seed: Option<u64>,
    pub outputs: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, f64>,
}

impl Summary {
    pub fn new(command: &'static str, seed: Option<u64>) -> Self {
        Self {
            command,
            status: "ok",
            seed,
            outputs: BTreeMap::new(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn output(&mut self, name: &str, path: &Path) -> &mut Self {
        self.outputs.insert(name.to_string(), path.display().to_string());
        self
    }

    pub fn metric(&mut self, name: &str, value: f64) -> &mut Self {
        self.metrics.insert(name.to_string(), value);
        self
    }
}

/// Writes via a sibling temp file and rename, so readers never observe a
/// half-written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = parent {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp: PathBuf = path.to_path_buf();
    let mut name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    name.push_str(".tmp");
    tmp.set_file_name(name);
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("moving {} into place", path.display()))?;
    Ok(())
}

/// `epoch,train_cost,val_cost` rows, 1-based epochs.
pub fn cost_curve_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,train_cost,val_cost\n");
    for (i, (t, v)) in report.train_costs.iter().zip(&report.val_costs).enumerate() {
        let _ = writeln!(out, "{},{t},{v}", i + 1);
    }
    out
}

/// Square matrix with a leading label column and a label header row.
pub fn confusion_csv(labels: &[String], confusion: &[Vec<usize>]) -> String {
    let mut out = String::from("truth\\prediction");
    for label in labels {
        let _ = write!(out, ",{label}");
    }
    out.push('\n');
    for (label, row) in labels.iter().zip(confusion) {
        let _ = write!(out, "{label}");
        for count in row {
            let _ = write!(out, ",{count}");
        }
        out.push('\n');
    }
    out
}

/// `optimizer,learning_rate,final_val_cost,test_accuracy,optimal` rows.
pub fn sweep_csv(table: &SweepTable) -> String {
    let mut out = String::from("optimizer,learning_rate,final_val_cost,test_accuracy,optimal\n");
    for row in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.optimizer.kind.as_str(),
            row.optimizer.learning_rate,
            row.final_val_cost,
            row.test_accuracy,
            row.optimal
        );
    }
    out
}

/// Writes report.json, cost_curve.csv and confusion.csv into `dir`.
pub fn emit_train_reports(dir: &Path, report: &TrainReport) -> Result<Vec<(String, PathBuf)>> {
    let mut written = Vec::new();
    let report_json = serde_json::to_string_pretty(report)? + "\n";
    for (name, contents) in [
        ("report.json", report_json),
        ("cost_curve.csv", cost_curve_csv(report)),
        ("confusion.csv", confusion_csv(&report.labels, &report.confusion)),
    ] {
        let path = dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        written.push((name.to_string(), path));
    }
    Ok(written)
}
