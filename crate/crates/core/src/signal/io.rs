//! On-disk formats for spectrogram batches.
//!
//! Batch file: JSON Lines, one record per spectrogram with `bins` stored
//! column-major as 5 arrays of 10. Normalization statistics live in a
//! versioned sidecar JSON.

use super::{NormStats, Spectrogram, FREQ_BINS, TIME_FRAMES};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct SpectrogramRecord {
    label: Option<String>,
    window_start_s: f64,
    /// Column-major: one array of 10 magnitudes per time frame.
    bins: Vec<Vec<f64>>,
}

const STATS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NormStatsFile {
    min: f64,
    max: f64,
    version: u32,
}

impl From<&Spectrogram> for SpectrogramRecord {
    fn from(spec: &Spectrogram) -> Self {
        let bins = (0..TIME_FRAMES)
            .map(|col| (0..FREQ_BINS).map(|row| spec.bins[row][col]).collect())
            .collect();
        SpectrogramRecord {
            label: spec.label.clone(),
            window_start_s: spec.window_start_s,
            bins,
        }
    }
}

impl SpectrogramRecord {
    fn into_spectrogram(self, line: usize) -> Result<Spectrogram> {
        if self.bins.len() != TIME_FRAMES || self.bins.iter().any(|c| c.len() != FREQ_BINS) {
            return Err(Error::Format(format!(
                "line {line}: bins must be {TIME_FRAMES} columns of {FREQ_BINS} values"
            )));
        }
        let mut spec = Spectrogram {
            bins: [[0.0; TIME_FRAMES]; FREQ_BINS],
            window_start_s: self.window_start_s,
            label: self.label,
        };
        for (col, column) in self.bins.iter().enumerate() {
            for (row, &v) in column.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Format(format!(
                        "line {line}: bin [{row}][{col}] is not a finite nonnegative number"
                    )));
                }
                spec.bins[row][col] = v;
            }
        }
        Ok(spec)
    }
}

pub fn write_spectrograms<W: Write>(mut w: W, specs: &[Spectrogram]) -> Result<()> {
    for spec in specs {
        let record = SpectrogramRecord::from(spec);
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_spectrograms_file(path: &Path, specs: &[Spectrogram]) -> Result<()> {
    let mut buf = Vec::new();
    write_spectrograms(&mut buf, specs)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_spectrograms_file(path: &Path) -> Result<Vec<Spectrogram>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SpectrogramRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {}: {e}", idx + 1)))?;
        out.push(record.into_spectrogram(idx + 1)?);
    }
    Ok(out)
}

pub fn write_norm_stats_file(path: &Path, stats: &NormStats) -> Result<()> {
    let file = NormStatsFile {
        min: stats.min,
        max: stats.max,
        version: STATS_VERSION,
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(())
}

pub fn read_norm_stats_file(path: &Path) -> Result<NormStats> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
    let file: NormStatsFile = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if file.version != STATS_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported stats version {}",
            path.display(),
            file.version
        )));
    }
    Ok(NormStats {
        min: file.min,
        max: file.max,
    })
}

/// Conventional sidecar path for a batch file: `specs.jsonl` -> `specs.norm.json`.
pub fn norm_stats_sidecar_path(batch_path: &Path) -> std::path::PathBuf {
    batch_path.with_extension("norm.json")
}
