//! Error type shared by the whole pipeline.

use std::path::PathBuf;

/// Errors produced by hashing, verification, attacks, and the experiment
/// harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A file could not be read or written.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// An image file exists but could not be decoded into the canonical form.
    #[error("unsupported or malformed image {path}: {reason}")]
    ImageFormat { path: PathBuf, reason: String },

    /// An in-memory encode/decode step failed.
    #[error("image codec error: {0}")]
    Codec(String),

    /// An argument violated a precondition (empty point set, bad k, ...).
    #[error("invalid input: {0}")]
    Domain(String),

    /// A pixel region or filter placement falls outside the image.
    #[error("out of bounds: {0}")]
    Bounds(String),

    /// The image produced no keypoints, so no hash can be generated.
    #[error("no keypoints detected; the image is too featureless to hash")]
    NoKeypoints,

    /// The received hash was produced under a different configuration.
    #[error("configuration fingerprint mismatch: hash carries {received:#010x}, current configuration is {expected:#010x}")]
    ConfigMismatch { expected: u32, received: u32 },

    /// A serialized hash failed validation.
    #[error("malformed hash data: {0}")]
    HashFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;
