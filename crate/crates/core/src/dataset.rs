//! Dataset ingestion and generation: the wide per-class CSV layout used by
//! the source measurements, a canonical long format for interchange, and a
//! seeded synthetic strain generator that stands in for the physical rig.

use crate::error::{Error, Result};
use crate::signal::{self, NormStats, Spectrogram, TimeSeries};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// One time series per class, with an explicit label order fixing class
/// indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    classes: Vec<(String, TimeSeries)>,
}

impl LabeledDataset {
    pub fn new(classes: Vec<(String, TimeSeries)>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::Data(format!(
                "a labeled dataset needs at least 2 classes, got {}",
                classes.len()
            )));
        }
        let rate = classes[0].1.sample_rate_hz;
        for (label, series) in &classes {
            if (series.sample_rate_hz - rate).abs() > 1e-9 {
                return Err(Error::Data(format!(
                    "class \"{label}\" is sampled at {} Hz but the dataset runs at {rate} Hz",
                    series.sample_rate_hz
                )));
            }
        }
        for (i, (label, _)) in classes.iter().enumerate() {
            if classes[..i].iter().any(|(l, _)| l == label) {
                return Err(Error::Data(format!("duplicate class label \"{label}\"")));
            }
        }
        Ok(Self { classes })
    }

    pub fn labels(&self) -> Vec<&str> {
        self.classes.iter().map(|(l, _)| l.as_str()).collect()
    }

    pub fn classes(&self) -> &[(String, TimeSeries)] {
        &self.classes
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.classes[0].1.sample_rate_hz
    }
}

/// Recipe for one synthetic class: a DC level, a slow drift, a handful of
/// sinusoidal components and Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub label: String,
    pub dc_offset: f64,
    pub components: Vec<Component>,
    pub noise_sigma: f64,
    pub drift_per_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub frequency_hz: f64,
    pub amplitude: f64,
}

impl ClassProfile {
    fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        let nyquist = sample_rate_hz / 2.0;
        for c in &self.components {
            if c.frequency_hz >= nyquist {
                return Err(Error::Config(format!(
                    "component at {} Hz in \"{}\" would alias (Nyquist {nyquist} Hz)",
                    c.frequency_hz, self.label
                )));
            }
            if c.amplitude < 0.0 {
                return Err(Error::Config(format!(
                    "negative amplitude in \"{}\"",
                    self.label
                )));
            }
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Config(format!(
                "negative noise level in \"{}\"",
                self.label
            )));
        }
        Ok(())
    }
}

/// The four fixation-state profiles bundled with the tool. DC levels mirror
/// the per-state offsets of the reference measurements; each class also
/// oscillates at its own bin-centered frequency (multiples of 0.5 Hz land
/// exactly on a spectrogram row), so both offset and spectrum carry the
/// class signal. Amplitudes are sized so the class rows stay visible after
/// global min-max scaling against the dominant DC magnitude.
pub fn state_profiles() -> Vec<ClassProfile> {
    let mk = |label: &str, dc: f64, f: f64, a: f64, drift: f64| ClassProfile {
        label: label.to_string(),
        dc_offset: dc,
        components: vec![Component {
            frequency_hz: f,
            amplitude: a,
        }],
        noise_sigma: 0.3,
        drift_per_s: drift,
    };
    vec![
        mk("normal", 366.0, 1.0, 20.0, -0.005),
        mk("abnormal-1", 360.0, 1.5, 16.0, -0.002),
        mk("abnormal-2", 359.0, 2.0, 14.0, -0.004),
        mk("abnormal-3", 356.0, 2.5, 12.0, -0.002),
    ]
}

/// Three impact-object profiles: distinct dominant rattle frequencies with a
/// weaker overtone each.
pub fn impact_profiles() -> Vec<ClassProfile> {
    let mk = |label: &str, dc: f64, comps: Vec<(f64, f64)>| ClassProfile {
        label: label.to_string(),
        dc_offset: dc,
        components: comps
            .into_iter()
            .map(|(frequency_hz, amplitude)| Component {
                frequency_hz,
                amplitude,
            })
            .collect(),
        noise_sigma: 0.25,
        drift_per_s: 0.0,
    };
    vec![
        mk("hand", 359.0, vec![(1.0, 15.0), (2.0, 5.0)]),
        mk("hammer", 358.0, vec![(2.5, 18.0), (4.0, 6.0)]),
        mk("spanner", 357.0, vec![(3.5, 16.0), (1.5, 5.0)]),
    ]
}

/// Reads a JSON array of [`ClassProfile`] records.
pub fn read_profiles_file(path: &Path) -> Result<Vec<ClassProfile>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
    let profiles: Vec<ClassProfile> = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(profiles)
}

const GENERATOR_START_TIME_S: f64 = 0.1;

/// Generates one labeled series per profile:
/// `dc + drift*t + sum(amp * sin(2*pi*f*t + phase)) + N(0, sigma)`,
/// sampled at 10 Hz. Phases and noise come from a per-class seeded stream,
/// so the same seed is bit-identical and a different seed changes only
/// phase and noise.
pub fn generate_synthetic(
    profiles: &[ClassProfile],
    duration_s: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if profiles.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 class profiles, got {}",
            profiles.len()
        )));
    }
    if duration_s < signal::WINDOW_SECONDS {
        return Err(Error::Config(format!(
            "duration must cover at least one {} s window, got {duration_s} s",
            signal::WINDOW_SECONDS
        )));
    }
    let rate = signal::SAMPLE_RATE_HZ;
    let len = (duration_s * rate).round() as usize;
    let mut classes = Vec::with_capacity(profiles.len());
    for (class_idx, profile) in profiles.iter().enumerate() {
        profile.validate(rate)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class_idx as u64);
        let phases: Vec<f64> = profile
            .components
            .iter()
            .map(|_| {
                let u: f64 = rand::RngExt::random_range(&mut rng, 0.0..1.0);
                u * std::f64::consts::TAU
            })
            .collect();
        let noise = Normal::new(0.0, profile.noise_sigma.max(f64::MIN_POSITIVE))
            .expect("validated sigma");
        let mut samples = Vec::with_capacity(len);
        for k in 0..len {
            let t = k as f64 / rate;
            let mut v = profile.dc_offset + profile.drift_per_s * t;
            for (c, phase) in profile.components.iter().zip(&phases) {
                v += c.amplitude * (std::f64::consts::TAU * c.frequency_hz * t + phase).sin();
            }
            if profile.noise_sigma > 0.0 {
                v += noise.sample(&mut rng);
            }
            samples.push(v);
        }
        let series = TimeSeries::new(
            rate,
            GENERATOR_START_TIME_S,
            samples,
            Some(profile.label.clone()),
        )?;
        classes.push((profile.label.clone(), series));
    }
    LabeledDataset::new(classes)
}

/// Parses the wide layout (one time column, one column per class) into a
/// labeled dataset. The time column must be strictly increasing and
/// uniformly spaced within 1 microsecond. `trim_tail_s` drops that many
/// trailing seconds from every series.
pub fn import_wide_csv(
    path: &Path,
    time_column: &str,
    label_columns: &[String],
    trim_tail_s: f64,
) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
    parse_wide_csv(&text, time_column, label_columns, trim_tail_s)
}

fn parse_wide_csv(
    text: &str,
    time_column: &str,
    label_columns: &[String],
    trim_tail_s: f64,
) -> Result<LabeledDataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Format("file is empty".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| -> Result<usize> {
        columns
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Format(format!("missing column \"{name}\"")))
    };
    let time_idx = find(time_column)?;
    let label_idx: Vec<usize> = label_columns
        .iter()
        .map(|l| find(l))
        .collect::<Result<_>>()?;
    if label_idx.len() < 2 {
        return Err(Error::Config("need at least 2 label columns".into()));
    }

    let mut times: Vec<f64> = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); label_idx.len()];
    for (line_no, line) in lines {
        let row = line_no + 1; // 1-based, header included
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |idx: usize| -> Result<f64> {
            let cell = cells.get(idx).copied().unwrap_or("");
            cell.parse::<f64>().map_err(|_| {
                Error::Format(format!(
                    "row {row}, column \"{}\": \"{cell}\" is not a number",
                    columns.get(idx).copied().unwrap_or("?")
                ))
            })
        };
        times.push(parse(time_idx)?);
        for (slot, &idx) in values.iter_mut().zip(&label_idx) {
            slot.push(parse(idx)?);
        }
    }
    if times.len() < 2 {
        return Err(Error::Format("need at least 2 data rows".into()));
    }

    let dt = times[1] - times[0];
    if dt <= 0.0 {
        return Err(Error::Format(
            "row 3: time column is not strictly increasing".into(),
        ));
    }
    for (k, pair) in times.windows(2).enumerate() {
        let step = pair[1] - pair[0];
        if step <= 0.0 || (step - dt).abs() > 1e-6 {
            return Err(Error::Format(format!(
                "row {}: timestamps are not uniform ({step} s step, expected {dt} s)",
                k + 3 // pair (k, k+1) maps to data rows (k+2, k+3) counting the header
            )));
        }
    }
    let rate = 1.0 / dt;

    let trim = (trim_tail_s * rate).round() as usize;
    let keep = times.len().saturating_sub(trim);
    if keep == 0 {
        return Err(Error::Data(format!(
            "trimming {trim_tail_s} s removes every sample"
        )));
    }

    let mut classes = Vec::with_capacity(label_idx.len());
    for (label, series_values) in label_columns.iter().zip(values) {
        let series = TimeSeries::new(
            rate,
            times[0],
            series_values[..keep].to_vec(),
            Some(label.clone()),
        )?;
        classes.push((label.clone(), series));
    }
    LabeledDataset::new(classes)
}

/// Serializes a dataset to the canonical long format: `time_s,amplitude,label`,
/// one row per sample, classes in label order. Values round-trip exactly
/// (shortest f64 representation); labels are written verbatim, so they may
/// contain anything except a newline.
pub fn export_canonical(dataset: &LabeledDataset) -> String {
    let mut out = String::from("time_s,amplitude,label\n");
    for (label, series) in dataset.classes() {
        let rate = series.sample_rate_hz;
        for (k, v) in series.samples.iter().enumerate() {
            let t = series.start_time_s + k as f64 / rate;
            let _ = writeln!(out, "{t},{v},{label}");
        }
    }
    out
}

pub fn write_canonical_csv(path: &Path, dataset: &LabeledDataset) -> Result<()> {
    std::fs::write(path, export_canonical(dataset))?;
    Ok(())
}

/// Parses the canonical long format back into a dataset. Label order is
/// first appearance; every class must be uniformly sampled at the shared
/// rate.
pub fn import_canonical(path: &Path) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
    parse_canonical(&text)
}

fn parse_canonical(text: &str) -> Result<LabeledDataset> {
    let mut labels: Vec<String> = Vec::new();
    let mut times: Vec<Vec<f64>> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut rows = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = rows
        .next()
        .ok_or_else(|| Error::Format("file is empty".into()))?;
    if !header.starts_with("time_s,amplitude") {
        return Err(Error::Format(format!(
            "expected a \"time_s,amplitude,label\" header, got \"{header}\""
        )));
    }
    for (line_no, line) in rows {
        let row = line_no + 1;
        let (time_s, amplitude, label) = parse_canonical_row(line)
            .ok_or_else(|| Error::Format(format!("row {row}: expected time_s,amplitude,label")))?;
        let group = match labels.iter().position(|l| l == label) {
            Some(g) => g,
            None => {
                labels.push(label.to_string());
                times.push(Vec::new());
                values.push(Vec::new());
                labels.len() - 1
            }
        };
        times[group].push(time_s);
        values[group].push(amplitude);
    }
    if labels.is_empty() {
        return Err(Error::Format("no data rows".into()));
    }
    let mut classes = Vec::with_capacity(labels.len());
    let mut shared_rate: Option<f64> = None;
    for ((label, ts), vs) in labels.into_iter().zip(times).zip(values) {
        if ts.len() < 2 {
            return Err(Error::Format(format!(
                "class \"{label}\" has fewer than 2 samples"
            )));
        }
        let dt = ts[1] - ts[0];
        for pair in ts.windows(2) {
            let step = pair[1] - pair[0];
            if step <= 0.0 || (step - dt).abs() > 1e-6 {
                return Err(Error::Format(format!(
                    "class \"{label}\" is not uniformly sampled"
                )));
            }
        }
        let rate = 1.0 / dt;
        if let Some(r) = shared_rate {
            if (rate - r).abs() > 1e-9 {
                return Err(Error::Data("classes disagree on the sample rate".into()));
            }
        } else {
            shared_rate = Some(rate);
        }
        classes.push((label.clone(), TimeSeries::new(rate, ts[0], vs, Some(label))?));
    }
    LabeledDataset::new(classes)
}

/// `time,amplitude,label` where the label is everything after the second
/// comma (so labels survive embedded commas).
pub fn parse_canonical_row(line: &str) -> Option<(f64, f64, &str)> {
    let mut parts = line.splitn(3, ',');
    let time_s: f64 = parts.next()?.trim().parse().ok()?;
    let amplitude: f64 = parts.next()?.trim().parse().ok()?;
    let label = parts.next().unwrap_or("");
    Some((time_s, amplitude, label))
}

/// Windows every class, builds one spectrogram per window, and min-max
/// normalizes the whole batch globally. Items come out class by class in
/// label order, windows in time order.
pub fn featurize_dataset(dataset: &LabeledDataset) -> Result<(Vec<Spectrogram>, NormStats)> {
    let mut specs = Vec::new();
    for (label, series) in dataset.classes() {
        if series.duration_s() < signal::WINDOW_SECONDS {
            return Err(Error::Data(format!(
                "class \"{label}\" holds {:.1} s of data, below one {} s window",
                series.duration_s(),
                signal::WINDOW_SECONDS
            )));
        }
        for window in signal::window_series(series, signal::WINDOW_SECONDS, false)? {
            specs.push(signal::build_spectrogram(&window)?);
        }
    }
    let (normalized, stats) = signal::normalize_spectrograms(&specs)?;
    Ok((normalized, stats))
}
