//! Dense row-major rank-3 tensor, the feature-map carrier.

use crate::error::{Error, Result};
use crate::signal::{Spectrogram, FREQ_BINS, TIME_FRAMES};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    values: Vec<f64>,
}

impl Tensor3 {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "expected {} values for a {channels}x{height}x{width} tensor, got {}",
                channels * height * width,
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::MalformedInput(format!("value {k} is not finite")));
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    /// A spectrogram as a single-channel input map.
    pub fn from_spectrogram(spec: &Spectrogram) -> Self {
        let mut values = Vec::with_capacity(FREQ_BINS * TIME_FRAMES);
        for row in &spec.bins {
            values.extend_from_slice(row);
        }
        Self {
            channels: 1,
            height: FREQ_BINS,
            width: TIME_FRAMES,
            values,
        }
    }

    #[inline]
    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.values[(c * self.height + h) * self.width + w]
    }

    #[inline]
    pub fn set(&mut self, c: usize, h: usize, w: usize, v: f64) {
        self.values[(c * self.height + h) * self.width + w] = v;
    }

    #[inline]
    pub fn add(&mut self, c: usize, h: usize, w: usize, v: f64) {
        self.values[(c * self.height + h) * self.width + w] += v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// One channel plane as a slice.
    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.values[c * plane..(c + 1) * plane]
    }

    pub fn spatial_len(&self) -> usize {
        self.height * self.width
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3 {
            channels: self.channels,
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Stacks tensors along the channel axis; all parts must share height/width.
pub fn concat_channels(parts: &[&Tensor3]) -> Tensor3 {
    debug_assert!(!parts.is_empty());
    let (h, w) = (parts[0].height, parts[0].width);
    debug_assert!(parts.iter().all(|p| p.height == h && p.width == w));
    let channels = parts.iter().map(|p| p.channels).sum();
    let mut values = Vec::with_capacity(channels * h * w);
    for part in parts {
        values.extend_from_slice(&part.values);
    }
    Tensor3 {
        channels,
        height: h,
        width: w,
        values,
    }
}

/// Splits a channel-axis gradient back into per-part tensors with the given
/// channel counts.
pub fn split_channels(t: &Tensor3, channel_counts: &[usize]) -> Vec<Tensor3> {
    debug_assert_eq!(channel_counts.iter().sum::<usize>(), t.channels);
    let plane = t.height * t.width;
    let mut out = Vec::with_capacity(channel_counts.len());
    let mut offset = 0;
    for &c in channel_counts {
        out.push(Tensor3 {
            channels: c,
            height: t.height,
            width: t.width,
            values: t.values[offset * plane..(offset + c) * plane].to_vec(),
        });
        offset += c;
    }
    out
}
