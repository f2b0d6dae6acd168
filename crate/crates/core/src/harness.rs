//! Experiment procedures: the k sweep, threshold calibration by curve
//! crossing, and corpus evaluation. Each emits a plottable CSV.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::attacks::ManifestRow;
use crate::error::{Error, Result};
use crate::hash::{generate_hash, ImageHash};
use crate::image_io::{load_grayscale, GrayImage};
use crate::kmeans::{kmeans_pp_init, lloyd, KMeansConfig, Point};
use crate::surf::{detect_keypoints, DetectorConfig};
use crate::verify::{min_indexed_distance, verify, Threshold, Verdict};

/// Distances for one value of k across all image pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    /// One entry per pair; `None` when a side had fewer than k keypoints and
    /// the cell was skipped.
    pub per_image_min_distance: Vec<Option<f64>>,
    /// Mean over the non-skipped entries; `None` when every cell skipped.
    pub average_min_distance: Option<f64>,
}

/// For each k: hash the original with k-means++, recompute on the comparison
/// image seeded by that hash, and record the minimum center distance.
pub fn sweep_k(
    pairs: &[(GrayImage, GrayImage)],
    k_values: &[usize],
    dcfg: &DetectorConfig,
    kcfg_base: &KMeansConfig,
) -> Result<Vec<SweepRow>> {
    dcfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Domain("sweep needs at least one image pair".into()));
    }
    if k_values.is_empty() || k_values.contains(&0) {
        return Err(Error::Domain("k values must be a non-empty list of k >= 1".into()));
    }

    // keypoints once per image; the sweep re-clusters the same points
    let detected: Vec<(Vec<Point>, Vec<Point>)> = pairs
        .par_iter()
        .map(|(a, b)| {
            let pa = detect_keypoints(a, dcfg)?
                .iter()
                .map(|kp| Point::new(kp.x, kp.y))
                .collect();
            let pb = detect_keypoints(b, dcfg)?
                .iter()
                .map(|kp| Point::new(kp.x, kp.y))
                .collect();
            Ok((pa, pb))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let kcfg = KMeansConfig { k, ..kcfg_base.clone() };
        let per_image: Vec<Option<f64>> = detected
            .par_iter()
            .map(|(pa, pb)| -> Result<Option<f64>> {
                if pa.len() < k || pb.len() < k {
                    return Ok(None); // skipped cell
                }
                let seeds = kmeans_pp_init(pa, k, kcfg.rng_seed)?;
                let sender = lloyd(pa, &seeds, &kcfg)?;
                let receiver = lloyd(pb, &sender.centers, &kcfg)?;
                Ok(Some(min_indexed_distance(&sender.centers, &receiver.centers)?))
            })
            .collect::<Result<_>>()?;
        let used: Vec<f64> = per_image.iter().flatten().copied().collect();
        let average = if used.is_empty() {
            None
        } else {
            Some(used.iter().sum::<f64>() / used.len() as f64)
        };
        rows.push(SweepRow {
            k,
            per_image_min_distance: per_image,
            average_min_distance: average,
        });
    }
    Ok(rows)
}

/// One point of a calibration curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    pub threshold: f64,
    /// Fraction of attacked originals with distance strictly below the
    /// threshold (correctly read as authentic).
    pub original_accuracy: f64,
    /// Fraction of tampered images with distance at or above the threshold
    /// (correctly read as tampered).
    pub tampered_accuracy: f64,
}

/// Calibration outcome for one attack kind.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub attack_kind: String,
    /// Threshold where the two accuracy curves cross.
    pub crossing_threshold: f64,
    /// Shared accuracy value at the crossing.
    pub crossing_accuracy: f64,
    pub curve: Vec<CalibrationPoint>,
}

/// Distance between one original and its processed counterpart: hash the
/// original, recompute on the processed image. A degenerate (featureless)
/// processed image reads as infinite distance, i.e. always tampered.
pub fn pair_min_distance(
    original: &GrayImage,
    processed: &GrayImage,
    dcfg: &DetectorConfig,
    kcfg: &KMeansConfig,
) -> Result<f64> {
    let hash = generate_hash(original, dcfg, kcfg)?;
    let report = verify(processed, &hash, Threshold::default(), dcfg, kcfg)?;
    Ok(report.min_distance.unwrap_or(f64::INFINITY))
}

/// Calibrates the decision threshold from measured image pairs.
pub fn calibrate_threshold(
    attack_kind: &str,
    originals_attacked: &[(GrayImage, GrayImage)],
    tampered: &[(GrayImage, GrayImage)],
    grid: &[f64],
    dcfg: &DetectorConfig,
    kcfg: &KMeansConfig,
) -> Result<CalibrationResult> {
    let original_distances: Vec<f64> = originals_attacked
        .par_iter()
        .map(|(a, b)| pair_min_distance(a, b, dcfg, kcfg))
        .collect::<Result<_>>()?;
    let tampered_distances: Vec<f64> = tampered
        .par_iter()
        .map(|(a, b)| pair_min_distance(a, b, dcfg, kcfg))
        .collect::<Result<_>>()?;
    calibrate_from_distances(attack_kind, &original_distances, &tampered_distances, grid)
}

/// Core calibration machinery over precomputed distances.
///
/// For each grid threshold `t`: `original_accuracy = frac(d_orig < t)` and
/// `tampered_accuracy = frac(d_tamp >= t)`. The crossing is the grid point
/// minimizing the absolute accuracy difference (ties to the smaller
/// threshold); when the signed difference flips between adjacent grid points
/// the crossing is linearly interpolated between them.
pub fn calibrate_from_distances(
    attack_kind: &str,
    original_distances: &[f64],
    tampered_distances: &[f64],
    grid: &[f64],
) -> Result<CalibrationResult> {
    if original_distances.is_empty() || tampered_distances.is_empty() {
        return Err(Error::Domain("calibration needs both populations".into()));
    }
    if grid.len() < 2 {
        return Err(Error::Domain("threshold grid needs at least two entries".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("threshold grid must be strictly ascending".into()));
    }

    let curve: Vec<CalibrationPoint> = grid
        .iter()
        .map(|&t| CalibrationPoint {
            threshold: t,
            original_accuracy: fraction(original_distances, |d| d < t),
            tampered_accuracy: fraction(tampered_distances, |d| d >= t),
        })
        .collect();

    // the verdict rule makes these monotone by construction
    debug_assert!(curve
        .windows(2)
        .all(|w| w[1].original_accuracy >= w[0].original_accuracy));
    debug_assert!(curve
        .windows(2)
        .all(|w| w[1].tampered_accuracy <= w[0].tampered_accuracy));

    let diff: Vec<f64> = curve
        .iter()
        .map(|p| p.original_accuracy - p.tampered_accuracy)
        .collect();

    let (crossing_threshold, crossing_accuracy) =
        if let Some(i) = diff.iter().position(|&d| d == 0.0) {
            (curve[i].threshold, curve[i].original_accuracy)
        } else if let Some(i) = (0..diff.len() - 1).find(|&i| diff[i] < 0.0 && diff[i + 1] > 0.0) {
            // interpolate the zero of the signed difference; both accuracy
            // interpolants agree exactly at that point
            let s = -diff[i] / (diff[i + 1] - diff[i]);
            let t = curve[i].threshold + s * (curve[i + 1].threshold - curve[i].threshold);
            let acc = curve[i].original_accuracy
                + s * (curve[i + 1].original_accuracy - curve[i].original_accuracy);
            (t, acc)
        } else {
            // no crossing on the grid: nearest miss, ties to the smaller t
            let mut best = 0usize;
            for i in 1..diff.len() {
                if diff[i].abs() < diff[best].abs() {
                    best = i;
                }
            }
            (curve[best].threshold, curve[best].original_accuracy)
        };

    Ok(CalibrationResult {
        attack_kind: attack_kind.to_string(),
        crossing_threshold,
        crossing_accuracy,
        curve,
    })
}

fn fraction(values: &[f64], pred: impl Fn(f64) -> bool) -> f64 {
    values.iter().filter(|&&v| pred(v)).count() as f64 / values.len() as f64
}

/// Per-image outcome of a corpus evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    /// The manifest's output path; unique per row.
    pub image_id: String,
    pub kind: String,
    pub parameter: f64,
    pub label: String,
    /// `None` when the row failed or the verification was degenerate.
    pub min_distance: Option<f64>,
    pub verdict: Option<Verdict>,
    /// True when the source or output file could not be processed; the row
    /// is excluded from the aggregate rates.
    pub failed: bool,
}

/// Aggregate outcome of a corpus evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    pub rows: Vec<EvalRow>,
    pub threshold: f64,
    pub tampered_total: usize,
    pub tampered_detected: usize,
    /// Fraction of tampered rows with a tampered verdict.
    pub accuracy: Option<f64>,
    pub original_total: usize,
    pub false_alarms: usize,
    /// Fraction of original rows wrongly read as tampered.
    pub false_alarm_rate: Option<f64>,
    pub failures: usize,
}

/// Hashes every distinct source in the manifest, verifies every output
/// against its source's hash, and aggregates detection and false-alarm
/// rates. Rows whose files cannot be processed are marked failed and
/// excluded from the rates.
pub fn evaluate(
    manifest: &[ManifestRow],
    threshold: Threshold,
    dcfg: &DetectorConfig,
    kcfg: &KMeansConfig,
) -> Result<EvaluationResult> {
    if manifest.is_empty() {
        return Err(Error::Domain("manifest is empty".into()));
    }

    // one hash per distinct source
    let mut sources: Vec<&str> = manifest.iter().map(|r| r.source_path.as_str()).collect();
    sources.sort_unstable();
    sources.dedup();
    let hashes: BTreeMap<&str, Option<ImageHash>> = sources
        .par_iter()
        .map(|&src| {
            let hash = load_grayscale(src)
                .and_then(|img| generate_hash(&img, dcfg, kcfg))
                .ok();
            (src, hash)
        })
        .collect();

    let rows: Vec<EvalRow> = manifest
        .par_iter()
        .map(|row| {
            let outcome = hashes
                .get(row.source_path.as_str())
                .and_then(|h| h.as_ref())
                .and_then(|hash| {
                    load_grayscale(&row.output_path)
                        .and_then(|img| verify(&img, hash, threshold, dcfg, kcfg))
                        .ok()
                });
            match outcome {
                Some(report) => EvalRow {
                    image_id: row.output_path.clone(),
                    kind: row.kind.clone(),
                    parameter: row.parameter,
                    label: row.label.clone(),
                    min_distance: report.min_distance,
                    verdict: Some(report.verdict),
                    failed: false,
                },
                None => EvalRow {
                    image_id: row.output_path.clone(),
                    kind: row.kind.clone(),
                    parameter: row.parameter,
                    label: row.label.clone(),
                    min_distance: None,
                    verdict: None,
                    failed: true,
                },
            }
        })
        .collect();

    let failures = rows.iter().filter(|r| r.failed).count();
    let tampered: Vec<&EvalRow> = rows.iter().filter(|r| !r.failed && r.label == "tampered").collect();
    let originals: Vec<&EvalRow> = rows.iter().filter(|r| !r.failed && r.label == "original").collect();
    let tampered_detected = tampered
        .iter()
        .filter(|r| r.verdict == Some(Verdict::Tampered))
        .count();
    let false_alarms = originals
        .iter()
        .filter(|r| r.verdict == Some(Verdict::Tampered))
        .count();

    Ok(EvaluationResult {
        threshold: threshold.value(),
        tampered_total: tampered.len(),
        tampered_detected,
        accuracy: ratio(tampered_detected, tampered.len()),
        original_total: originals.len(),
        false_alarms,
        false_alarm_rate: ratio(false_alarms, originals.len()),
        failures,
        rows,
    })
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Writes the k-sweep table: one row per (k, pair) with the per-k average
/// repeated, empty distance for skipped cells.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["k", "pair_index", "min_distance", "average_min_distance"])
        .map_err(|e| csv_error(path, e))?;
    for row in rows {
        let avg = row
            .average_min_distance
            .map(|v| format!("{v}"))
            .unwrap_or_default();
        for (i, cell) in row.per_image_min_distance.iter().enumerate() {
            let d = cell.map(|v| format!("{v}")).unwrap_or_default();
            w.write_record([row.k.to_string(), i.to_string(), d, avg.clone()])
                .map_err(|e| csv_error(path, e))?;
        }
    }
    finish_csv(path, w)
}

/// Writes calibration curves, one row per (attack kind, threshold).
pub fn write_calibration_csv(path: &Path, results: &[CalibrationResult]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["attack_kind", "threshold", "original_accuracy", "tampered_accuracy"])
        .map_err(|e| csv_error(path, e))?;
    for res in results {
        for p in &res.curve {
            w.write_record([
                res.attack_kind.clone(),
                format!("{}", p.threshold),
                format!("{}", p.original_accuracy),
                format!("{}", p.tampered_accuracy),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
    }
    finish_csv(path, w)
}

/// Writes the calibration summary: the crossing per attack kind plus the
/// averaged threshold across kinds.
pub fn write_calibration_summary_csv(path: &Path, results: &[CalibrationResult]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["attack_kind", "crossing_threshold", "crossing_accuracy"])
        .map_err(|e| csv_error(path, e))?;
    for res in results {
        w.write_record([
            res.attack_kind.clone(),
            format!("{}", res.crossing_threshold),
            format!("{}", res.crossing_accuracy),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    if !results.is_empty() {
        let avg =
            results.iter().map(|r| r.crossing_threshold).sum::<f64>() / results.len() as f64;
        w.write_record(["average".to_string(), format!("{avg}"), String::new()])
            .map_err(|e| csv_error(path, e))?;
    }
    finish_csv(path, w)
}

/// Writes per-image evaluation rows (the data behind the distance charts).
pub fn write_evaluation_csv(path: &Path, result: &EvaluationResult) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["image_id", "kind", "parameter", "label", "min_distance", "verdict", "failed"])
        .map_err(|e| csv_error(path, e))?;
    for row in &result.rows {
        w.write_record([
            row.image_id.clone(),
            row.kind.clone(),
            format!("{}", row.parameter),
            row.label.clone(),
            row.min_distance.map(|v| format!("{v}")).unwrap_or_default(),
            match row.verdict {
                Some(Verdict::Authentic) => "authentic".into(),
                Some(Verdict::Tampered) => "tampered".into(),
                None => String::new(),
            },
            row.failed.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    finish_csv(path, w)
}

/// Writes the evaluation aggregates, detection and false-alarm rates
/// included, as metric/value rows.
pub fn write_evaluation_summary_csv(path: &Path, result: &EvaluationResult) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["metric", "value"]).map_err(|e| csv_error(path, e))?;
    let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    let records: Vec<(&str, String)> = vec![
        ("threshold", format!("{}", result.threshold)),
        ("tampered_total", result.tampered_total.to_string()),
        ("tampered_detected", result.tampered_detected.to_string()),
        ("detection_rate", fmt_opt(result.accuracy)),
        ("original_total", result.original_total.to_string()),
        ("false_alarms", result.false_alarms.to_string()),
        ("false_alarm_rate", fmt_opt(result.false_alarm_rate)),
        ("failures", result.failures.to_string()),
    ];
    for (metric, value) in records {
        w.write_record([metric.to_string(), value])
            .map_err(|e| csv_error(path, e))?;
    }
    finish_csv(path, w)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn finish_csv(path: &Path, mut w: csv::Writer<std::fs::File>) -> Result<()> {
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Domain(format!("csv error on {}: {e}", path.display()))
}
