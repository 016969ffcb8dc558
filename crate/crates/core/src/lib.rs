//! Turns strain-gauge time series into 10x5 spectrogram features, trains a
//! small densely connected CNN on them, embeds the learned features in 3D,
//! and classifies live streams window by window.
//!
//! The pipeline stages map onto the top-level modules:
//!
//! - [`signal`] — windowing, DFT, spectrogram assembly, normalization
//! - [`dataset`] — CSV ingestion, the canonical long format, synthetic signals
//! - [`cnn`] — the network itself: forward, backward, prediction, model files
//! - [`train`] — optimizers, stratified splits, the training loop, sweeps
//! - [`tsne`] — exact t-SNE of learned features for 3D visualization
//! - [`stream`] — tailing a growing CSV and emitting one event per window
//!
//! Everything is deterministic for a fixed seed: same seed, same bytes.

pub mod cnn;
pub mod dataset;
pub mod error;
pub mod signal;
pub mod stream;
pub mod train;
pub mod tsne;

pub use error::{Error, Result};
