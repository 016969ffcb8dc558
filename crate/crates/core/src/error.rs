//! Error taxonomy shared by every module.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller asked for something the pipeline cannot be configured to do
    /// (bad learning rate, aliased frequency, perplexity >= N, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A tensor, frame or matrix had the wrong dimensions.
    #[error("shape error: {0}")]
    Shape(String),

    /// Input values themselves are unusable (empty frame, NaN sample).
    #[error("malformed input: {0}")]
    MalformedInput(String),

    /// A dataset-level problem: missing labels, empty classes, too-short series.
    #[error("data error: {0}")]
    Data(String),

    /// A file did not match its declared format; the message names the
    /// offending column/row where one can be identified.
    #[error("format error: {0}")]
    Format(String),

    /// An operation was called in the wrong order (backward without a
    /// training-mode forward, prediction with a mismatched label map).
    #[error("state error: {0}")]
    State(String),

    /// The live input stream misbehaved (out-of-order sample, truncated file).
    #[error("stream error: {0}")]
    Stream(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
