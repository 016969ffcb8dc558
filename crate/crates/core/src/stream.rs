//! Live mode: buffer samples as they arrive, classify every completed
//! 6-second window, and tail a growing canonical CSV without re-reading
//! consumed bytes.

use crate::cnn::{argmax, Mode, Model, Tensor3};
use crate::dataset::parse_canonical_row;
use crate::error::{Error, Result};
use crate::signal::{self, TimeSeries};
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::{Read, Seek, SeekFrom};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, SystemTime};

/// One classified window.
#[derive(Debug, Clone, Serialize)]
pub struct ClassificationEvent {
    pub window_index: u64,
    pub window_start_s: f64,
    pub label: String,
    pub probs: BTreeMap<String, f64>,
    pub out_of_range: bool,
    #[serde(skip)]
    pub emitted_at: SystemTime,
}

/// Pending samples (fewer than one window) plus the running window counter.
#[derive(Debug, Clone, Default)]
pub struct StreamState {
    /// (time_s, amplitude) pairs not yet assembled into a window.
    buffer: Vec<(f64, f64)>,
    next_window_index: u64,
    last_time_s: Option<f64>,
}

impl StreamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn next_window_index(&self) -> u64 {
        self.next_window_index
    }
}

/// Appends samples in time order and classifies every completed window of
/// 60 samples. A pure state transition: no I/O, exactly
/// `(buffered + new) / 60` events, remainder left buffered.
pub fn feed(
    state: &mut StreamState,
    samples: &[(f64, f64)],
    model: &Model,
) -> Result<Vec<ClassificationEvent>> {
    for &(t, v) in samples {
        if let Some(last) = state.last_time_s {
            if t <= last {
                return Err(Error::Stream(format!(
                    "sample at {t} s arrived after {last} s; the stream must move forward"
                )));
            }
        }
        if !v.is_finite() || !t.is_finite() {
            return Err(Error::Stream(format!("sample at {t} s is not finite")));
        }
        state.last_time_s = Some(t);
        state.buffer.push((t, v));
    }

    let mut events = Vec::new();
    while state.buffer.len() >= signal::WINDOW_SAMPLES {
        let window: Vec<(f64, f64)> = state.buffer.drain(..signal::WINDOW_SAMPLES).collect();
        let window_start_s = window[0].0;
        let series = TimeSeries::new(
            signal::SAMPLE_RATE_HZ,
            window_start_s.max(0.0),
            window.iter().map(|&(_, v)| v).collect(),
            None,
        )?;
        let spec = signal::build_spectrogram(&series)?;
        let (normalized, out_of_range) = spec.normalized_clamped(&model.norm_stats);
        let (probs, _) = model
            .network
            .forward(&[Tensor3::from_spectrogram(&normalized)], Mode::Infer)?;
        let probs = &probs[0];
        let winner = argmax(probs);
        let mut prob_map = BTreeMap::new();
        for (label, &p) in model.label_map.iter().zip(probs.iter()) {
            prob_map.insert(label.clone(), p);
        }
        events.push(ClassificationEvent {
            window_index: state.next_window_index,
            window_start_s,
            label: model.label_map[winner].clone(),
            probs: prob_map,
            out_of_range,
            emitted_at: SystemTime::now(),
        });
        state.next_window_index += 1;
    }
    Ok(events)
}

#[derive(Debug, Clone)]
pub struct WatchOptions {
    pub poll_interval: Duration,
}

impl Default for WatchOptions {
    fn default() -> Self {
        Self {
            poll_interval: Duration::from_millis(200),
        }
    }
}

/// Tails `path` until `stop` is raised: waits for the file to appear, skips
/// the canonical header, parses appended complete lines (bytes already
/// consumed are never re-read), feeds samples through [`feed`], and hands
/// each event to `sink` in window order.
///
/// Malformed rows are reported through `warn` and skipped; truncation of the
/// file is a fatal stream error; an out-of-order timestamp is fatal too,
/// since it means the producer rewrote history.
pub fn watch(
    path: &Path,
    model: &Model,
    options: &WatchOptions,
    stop: &AtomicBool,
    mut sink: impl FnMut(&ClassificationEvent) -> Result<()>,
    mut warn: impl FnMut(&str),
) -> Result<()> {
    let mut state = StreamState::new();
    let mut offset: u64 = 0;
    let mut pending = String::new();
    let mut header_seen = false;

    while !stop.load(Ordering::Relaxed) {
        let metadata = match std::fs::metadata(path) {
            Ok(m) => m,
            Err(_) => {
                // Not there yet; keep waiting.
                std::thread::sleep(options.poll_interval);
                continue;
            }
        };
        let len = metadata.len();
        if len < offset {
            return Err(Error::Stream(format!(
                "{} shrank from {offset} to {len} bytes",
                path.display()
            )));
        }
        if len > offset {
            let mut file = std::fs::File::open(path)?;
            file.seek(SeekFrom::Start(offset))?;
            let mut chunk = Vec::with_capacity((len - offset) as usize);
            file.take(len - offset).read_to_end(&mut chunk)?;
            offset += chunk.len() as u64;
            pending.push_str(&String::from_utf8_lossy(&chunk));

            let mut samples = Vec::new();
            while let Some(newline) = pending.find('\n') {
                let line: String = pending.drain(..=newline).collect();
                let line = line.trim_end();
                if line.is_empty() {
                    continue;
                }
                if !header_seen {
                    header_seen = true;
                    if line.starts_with("time_s") {
                        continue;
                    }
                }
                match parse_canonical_row(line) {
                    Some((t, v, _label)) => samples.push((t, v)),
                    None => warn(&format!("skipping malformed row: {line}")),
                }
            }
            if !samples.is_empty() {
                for event in feed(&mut state, &samples, model)? {
                    sink(&event)?;
                }
            }
        }
        std::thread::sleep(options.poll_interval);
    }
    Ok(())
}
