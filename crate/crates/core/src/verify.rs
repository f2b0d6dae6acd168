//! Receiver-side verification: recompute centers seeded by the received
//! hash, measure the minimum center displacement, decide authentic/tampered.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hash::{config_fingerprint, ImageHash};
use crate::image_io::GrayImage;
use crate::kmeans::{lloyd, KMeansConfig, Point};
use crate::surf::{detect_keypoints, DetectorConfig};

/// Decision boundary averaging the salt-and-pepper (2.1375) and JPEG
/// (2.6469) calibration crossings.
pub const DEFAULT_THRESHOLD: f64 = 2.3922;

/// Decision threshold on the minimum center displacement, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0) {
            return Err(Error::Domain(format!("threshold must be > 0, got {value}")));
        }
        Ok(Self(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Self(DEFAULT_THRESHOLD)
    }
}

/// Verification verdict. The boundary case `min_distance == threshold` is
/// tampered: the decision fails closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Authentic,
    Tampered,
}

/// Outcome of one verification, serialized as one JSON object on the CLI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    /// Minimum of `per_center_distances`; absent when degenerate.
    pub min_distance: Option<f64>,
    /// Index-wise Euclidean distances between sent and recomputed centers.
    pub per_center_distances: Vec<f64>,
    pub threshold: f64,
    pub verdict: Verdict,
    /// True when the received image produced zero keypoints; such an image
    /// cannot match a feature-bearing original, so the verdict is tampered.
    pub degenerate: bool,
    /// Lloyd iterations performed at the receiver (0 when degenerate).
    pub iterations: usize,
}

/// Receiver-side recomputation result.
#[derive(Debug, Clone, PartialEq)]
pub enum Recomputed {
    Hash { hash: ImageHash, iterations: usize },
    /// The received image yielded no keypoints.
    Degenerate,
}

/// Re-detects keypoints on the received image and runs Lloyd seeded with the
/// received centers (no k-means++ on this side), so recomputed center `i`
/// descends from sent center `i`.
pub fn recompute_hash(
    img: &GrayImage,
    received: &ImageHash,
    dcfg: &DetectorConfig,
    kcfg: &KMeansConfig,
) -> Result<Recomputed> {
    kcfg.validate()?;
    if received.k() != kcfg.k {
        return Err(Error::Domain(format!(
            "received hash has k = {}, configuration says k = {}",
            received.k(),
            kcfg.k
        )));
    }
    let expected = config_fingerprint(dcfg, kcfg);
    if expected != received.detector_fingerprint() {
        return Err(Error::ConfigMismatch {
            expected,
            received: received.detector_fingerprint(),
        });
    }
    let keypoints = detect_keypoints(img, dcfg)?;
    if keypoints.is_empty() {
        return Ok(Recomputed::Degenerate);
    }
    let points: Vec<Point> = keypoints.iter().map(|kp| Point::new(kp.x, kp.y)).collect();
    let result = lloyd(&points, received.centers(), kcfg)?;
    let hash = ImageHash::new(
        result.centers,
        img.width() as u32,
        img.height() as u32,
        expected,
    )?;
    Ok(Recomputed::Hash {
        hash,
        iterations: result.iterations,
    })
}

/// Index-wise Euclidean distances between two center lists of equal length.
pub fn center_distances(sent: &ImageHash, recomputed: &ImageHash) -> Result<Vec<f64>> {
    indexed_distances(sent.centers(), recomputed.centers())
}

/// Minimum of [`center_distances`]: the decision statistic.
pub fn min_center_distance(sent: &ImageHash, recomputed: &ImageHash) -> Result<f64> {
    let d = center_distances(sent, recomputed)?;
    Ok(d.into_iter().fold(f64::INFINITY, f64::min))
}

pub(crate) fn indexed_distances(a: &[Point], b: &[Point]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "center count mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(p, q)| p.distance(*q)).collect())
}

pub(crate) fn min_indexed_distance(a: &[Point], b: &[Point]) -> Result<f64> {
    Ok(indexed_distances(a, b)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// Full receiver pipeline: recompute, measure, decide.
///
/// Authentic requires `min_distance < threshold` and a non-degenerate
/// recomputation; everything else is tampered.
pub fn verify(
    img: &GrayImage,
    received: &ImageHash,
    threshold: Threshold,
    dcfg: &DetectorConfig,
    kcfg: &KMeansConfig,
) -> Result<VerificationReport> {
    match recompute_hash(img, received, dcfg, kcfg)? {
        Recomputed::Degenerate => Ok(VerificationReport {
            min_distance: None,
            per_center_distances: Vec::new(),
            threshold: threshold.value(),
            verdict: Verdict::Tampered,
            degenerate: true,
            iterations: 0,
        }),
        Recomputed::Hash { hash, iterations } => {
            let per_center_distances = center_distances(received, &hash)?;
            let min_distance = per_center_distances
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            let verdict = if min_distance < threshold.value() {
                Verdict::Authentic
            } else {
                Verdict::Tampered
            };
            Ok(VerificationReport {
                min_distance: Some(min_distance),
                per_center_distances,
                threshold: threshold.value(),
                verdict,
                degenerate: false,
                iterations,
            })
        }
    }
}
