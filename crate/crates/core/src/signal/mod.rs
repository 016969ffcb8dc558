//! Raw strain series -> fixed-shape 10x5 spectrogram features.
//!
//! A 6 s window at 10 Hz holds 60 samples. Five frames of length 20 with hop
//! 10 tile it exactly (20 + 4*10 = 60); each frame is transformed and the
//! lower half of the magnitude spectrum (bins 0..9, DC included) becomes one
//! column. The DC bin is kept on purpose: the mean strain offset is part of
//! the class signal.

mod fft;
pub mod io;

use crate::error::{Error, Result};
use num_complex::Complex64;

/// Default sampling rate of the sensor stream.
pub const SAMPLE_RATE_HZ: f64 = 10.0;
/// Seconds of signal per spectrogram window.
pub const WINDOW_SECONDS: f64 = 6.0;
/// Samples per window at the default rate.
pub const WINDOW_SAMPLES: usize = 60;
/// DFT frame length.
pub const FRAME_LEN: usize = 20;
/// Hop between successive frames inside a window.
pub const FRAME_HOP: usize = 10;
/// Frequency rows kept after the half cut (bins 0..=9).
pub const FREQ_BINS: usize = 10;
/// Time columns per spectrogram.
pub const TIME_FRAMES: usize = 5;

/// A uniformly sampled, optionally labeled amplitude record.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub sample_rate_hz: f64,
    pub start_time_s: f64,
    pub samples: Vec<f64>,
    pub label: Option<String>,
}

impl TimeSeries {
    /// Builds a series, validating rate and finiteness.
    pub fn new(
        sample_rate_hz: f64,
        start_time_s: f64,
        samples: Vec<f64>,
        label: Option<String>,
    ) -> Result<Self> {
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(Error::Config(format!(
                "sample rate must be positive and finite, got {sample_rate_hz}"
            )));
        }
        if start_time_s < 0.0 || !start_time_s.is_finite() {
            return Err(Error::Config(format!(
                "start time must be nonnegative, got {start_time_s}"
            )));
        }
        if let Some(k) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::MalformedInput(format!(
                "sample {k} is not finite"
            )));
        }
        Ok(Self {
            sample_rate_hz,
            start_time_s,
            samples,
            label,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

/// The complex coefficients of one transformed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub coefficients: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// A 10x5 matrix of nonnegative magnitudes; rows are frequency bins
/// (0 = DC), columns are time frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: [[f64; TIME_FRAMES]; FREQ_BINS],
    pub window_start_s: f64,
    pub label: Option<String>,
}

impl Spectrogram {
    pub fn zero() -> Self {
        Self {
            bins: [[0.0; TIME_FRAMES]; FREQ_BINS],
            window_start_s: 0.0,
            label: None,
        }
    }

    /// Applies an affine rescale with the given statistics, unclamped.
    pub fn normalized(&self, stats: &NormStats) -> Spectrogram {
        let mut out = self.clone();
        for row in out.bins.iter_mut() {
            for v in row.iter_mut() {
                *v = stats.apply(*v);
            }
        }
        out
    }

    /// Like [`Spectrogram::normalized`] but clamps to [0, 1] and reports
    /// whether anything fell outside the training range.
    pub fn normalized_clamped(&self, stats: &NormStats) -> (Spectrogram, bool) {
        let mut out = self.clone();
        let mut out_of_range = false;
        for row in out.bins.iter_mut() {
            for v in row.iter_mut() {
                let mapped = stats.apply(*v);
                if !(0.0..=1.0).contains(&mapped) {
                    out_of_range = true;
                }
                *v = mapped.clamp(0.0, 1.0);
            }
        }
        (out, out_of_range)
    }
}

/// The global min/max recorded when a batch was normalized, persisted so the
/// identical affine map can be reused at inference and streaming time.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormStats {
    pub min: f64,
    pub max: f64,
}

impl NormStats {
    /// Maps a raw magnitude into [0, 1]; a degenerate range maps to 0.
    pub fn apply(&self, x: f64) -> f64 {
        if self.max > self.min {
            (x - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }
}

/// Cuts a series into consecutive windows of `window_s` seconds.
///
/// With `overlap` unset the windows are disjoint and the trailing remainder
/// is discarded; with it set, windows advance by half a window. A series
/// shorter than one window yields an empty vector, not an error.
pub fn window_series(series: &TimeSeries, window_s: f64, overlap: bool) -> Result<Vec<TimeSeries>> {
    let exact = window_s * series.sample_rate_hz;
    let per_window = exact.round() as usize;
    if per_window == 0 || (exact - exact.round()).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "window of {window_s} s at {} Hz is not a whole number of samples",
            series.sample_rate_hz
        )));
    }
    let hop = if overlap { per_window / 2 } else { per_window };
    if hop == 0 {
        return Err(Error::Config("window too short to overlap".into()));
    }
    let mut out = Vec::new();
    let mut start = 0usize;
    while start + per_window <= series.samples.len() {
        out.push(TimeSeries {
            sample_rate_hz: series.sample_rate_hz,
            start_time_s: series.start_time_s + start as f64 / series.sample_rate_hz,
            samples: series.samples[start..start + per_window].to_vec(),
            label: series.label.clone(),
        });
        start += hop;
    }
    Ok(out)
}

/// Discrete Fourier transform of a real frame.
pub fn dft(frame: &[f64]) -> Result<ComplexSpectrum> {
    if frame.is_empty() {
        return Err(Error::MalformedInput("empty frame".into()));
    }
    if let Some(k) = frame.iter().position(|x| !x.is_finite()) {
        return Err(Error::MalformedInput(format!(
            "frame value {k} is not finite"
        )));
    }
    let buf: Vec<Complex64> = frame.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    Ok(ComplexSpectrum {
        coefficients: fft::fft(&buf),
    })
}

/// Magnitudes of the lower half of a length-20 spectrum: |f_0| ..= |f_9|.
/// The upper half is redundant for real frames by conjugate symmetry.
pub fn half_magnitudes(spectrum: &ComplexSpectrum) -> Result<[f64; FREQ_BINS]> {
    if spectrum.len() != FRAME_LEN {
        return Err(Error::Shape(format!(
            "expected a spectrum of length {FRAME_LEN}, got {}",
            spectrum.len()
        )));
    }
    let mut out = [0.0; FREQ_BINS];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = spectrum.coefficients[k].norm();
    }
    Ok(out)
}

/// Builds one 10x5 spectrogram from a 60-sample window: five frames of
/// length 20, hop 10, covering samples [0,20), [10,30), ... [40,60).
pub fn build_spectrogram(window: &TimeSeries) -> Result<Spectrogram> {
    if window.samples.len() != WINDOW_SAMPLES {
        return Err(Error::Shape(format!(
            "window must hold exactly {WINDOW_SAMPLES} samples, got {}",
            window.samples.len()
        )));
    }
    let mut spec = Spectrogram {
        bins: [[0.0; TIME_FRAMES]; FREQ_BINS],
        window_start_s: window.start_time_s,
        label: window.label.clone(),
    };
    for frame_idx in 0..TIME_FRAMES {
        let start = frame_idx * FRAME_HOP;
        let spectrum = dft(&window.samples[start..start + FRAME_LEN])?;
        let mags = half_magnitudes(&spectrum)?;
        for (bin, &m) in mags.iter().enumerate() {
            spec.bins[bin][frame_idx] = m;
        }
    }
    Ok(spec)
}

/// Min-max normalizes a batch to [0, 1] globally across every entry and
/// returns the statistics so the same map can be replayed later.
pub fn normalize_spectrograms(specs: &[Spectrogram]) -> Result<(Vec<Spectrogram>, NormStats)> {
    if specs.is_empty() {
        return Err(Error::MalformedInput(
            "cannot normalize an empty spectrogram batch".into(),
        ));
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for spec in specs {
        for row in &spec.bins {
            for &v in row {
                min = min.min(v);
                max = max.max(v);
            }
        }
    }
    let stats = NormStats { min, max };
    let normalized = specs.iter().map(|s| s.normalized(&stats)).collect();
    Ok((normalized, stats))
}
