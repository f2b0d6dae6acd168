//! Content-preserving attacks, tamper patches, and corpus generation.
//!
//! JPEG round trips and salt-and-pepper noise model benign transmission;
//! `tamper_patch` plants the malicious rectangle the verifier must catch.
//! `build_corpus` batches attacks over a directory and writes the manifest
//! CSV consumed by the experiment harness.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::{from_dynamic, load_grayscale, GrayImage};
use crate::integral::BoxRegion;

/// How a tamper patch is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TamperMode {
    /// One random constant over the whole patch.
    SolidFill,
    /// Independent uniform noise per pixel; the default, because it reliably
    /// plants new keypoints inside the patch.
    NoiseFill,
    /// Pixels copied from a donor image (tiled if the donor is smaller).
    Splice,
}

impl TamperMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TamperMode::SolidFill => "solid",
            TamperMode::NoiseFill => "noise",
            TamperMode::Splice => "splice",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "solid" => Ok(TamperMode::SolidFill),
            "noise" => Ok(TamperMode::NoiseFill),
            "splice" => Ok(TamperMode::Splice),
            other => Err(Error::Domain(format!(
                "unknown tamper mode {other:?} (expected solid, noise, or splice)"
            ))),
        }
    }
}

/// Parameters of one tamper patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TamperSpec {
    /// Fraction of the image area the patch may cover, in (0, 1).
    pub area_fraction: f64,
    pub mode: TamperMode,
    pub rng_seed: u64,
}

/// Encodes to JPEG at the given quality and decodes back. Dimensions are
/// preserved; pixel values take whatever loss the codec introduces.
pub fn jpeg_compress(img: &GrayImage, quality: u8) -> Result<GrayImage> {
    if !(1..=100).contains(&quality) {
        return Err(Error::Domain(format!("jpeg quality {quality} outside 1..=100")));
    }
    let samples = img.to_u8_samples();
    let mut encoded = Vec::new();
    image::codecs::jpeg::JpegEncoder::new_with_quality(Cursor::new(&mut encoded), quality)
        .encode(
            &samples,
            img.width() as u32,
            img.height() as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|e| Error::Codec(e.to_string()))?;
    let decoded = image::load_from_memory(&encoded).map_err(|e| Error::Codec(e.to_string()))?;
    let out = from_dynamic(decoded)?;
    debug_assert_eq!((out.width(), out.height()), (img.width(), img.height()));
    Ok(out)
}

/// Replaces each pixel independently with probability `density`; the
/// replacement is 0.0 or 1.0 with equal probability. Deterministic given
/// `rng_seed`.
pub fn salt_pepper(img: &GrayImage, density: f64, rng_seed: u64) -> Result<GrayImage> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::Domain(format!("noise density {density} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = img.clone();
    for p in out.pixels_mut() {
        if rng.random::<f64>() < density {
            *p = if rng.random::<f64>() < 0.5 { 0.0 } else { 1.0 };
        }
    }
    Ok(out)
}

/// Plants a random rectangle covering at most `area_fraction` of the image,
/// with aspect ratio drawn from [0.5, 2], filled per `spec.mode`. Returns
/// the tampered image and the patch region; pixels outside the region are
/// bit-identical to the input.
///
/// `donor` must be provided for [`TamperMode::Splice`] and is ignored
/// otherwise.
pub fn tamper_patch(
    img: &GrayImage,
    spec: &TamperSpec,
    donor: Option<&GrayImage>,
) -> Result<(GrayImage, BoxRegion)> {
    if !(spec.area_fraction > 0.0 && spec.area_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "area_fraction {} outside (0, 1)",
            spec.area_fraction
        )));
    }
    let (w, h) = (img.width(), img.height());
    let target_area = (spec.area_fraction * (w * h) as f64).floor();
    if target_area < 1.0 {
        return Err(Error::Domain(format!(
            "no patch of fraction {} fits a {w}x{h} image",
            spec.area_fraction
        )));
    }
    if spec.mode == TamperMode::Splice && donor.is_none() {
        return Err(Error::Domain("splice mode needs a donor image".into()));
    }

    // draw order is part of the determinism contract:
    // aspect, x0, y0, then fill values
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let aspect = 0.5 + 1.5 * rng.random::<f64>();
    let pw = (((target_area * aspect).sqrt().floor() as usize).max(1)).min(w);
    let ph = (((target_area / aspect).sqrt().floor() as usize).max(1)).min(h);
    debug_assert!(pw * ph <= target_area as usize);
    let x0 = rng.random_range(0..=w - pw);
    let y0 = rng.random_range(0..=h - ph);
    let region = BoxRegion::new(x0, y0, x0 + pw - 1, y0 + ph - 1)?;

    let mut out = img.clone();
    let solid = rng.random::<f64>(); // drawn unconditionally to keep the stream stable
    {
        let pixels = out.pixels_mut();
        for y in y0..y0 + ph {
            for x in x0..x0 + pw {
                pixels[y * w + x] = match spec.mode {
                    TamperMode::SolidFill => solid,
                    TamperMode::NoiseFill => rng.random::<f64>(),
                    TamperMode::Splice => {
                        let d = donor.expect("checked above");
                        d.get(x % d.width(), y % d.height())
                    }
                };
            }
        }
    }
    Ok((out, region))
}

/// Writes a grayscale image as an 8-bit PNG.
pub fn write_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf: image::GrayImage = image::ImageBuffer::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.to_u8_samples(),
    )
    .expect("dimensions match the buffer");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            other => Error::Codec(other.to_string()),
        })
}

/// One line of the corpus manifest CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub source_path: String,
    pub output_path: String,
    /// "jpeg", "saltpepper", or "tamper".
    pub kind: String,
    /// Quality, density, or area fraction, depending on `kind`.
    pub parameter: f64,
    pub rng_seed: u64,
    /// "original" for content-preserving outputs, "tampered" for patches.
    pub label: String,
}

/// Attack grid applied to every source image by [`build_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusOptions {
    pub jpeg_qualities: Vec<u8>,
    pub saltpepper_densities: Vec<f64>,
    pub tamper_fractions: Vec<f64>,
    pub tamper_mode: TamperMode,
    /// Per-output seeds are `base_seed + ordinal` in generation order.
    pub base_seed: u64,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            jpeg_qualities: vec![90, 70, 50],
            saltpepper_densities: vec![0.02, 0.05],
            tamper_fractions: vec![0.05],
            tamper_mode: TamperMode::NoiseFill,
            base_seed: 0,
        }
    }
}

/// Applies the attack grid to every PNG/JPEG under `src_dir` (sorted by
/// name, non-recursive), writes outputs as PNG under `out_dir`, and writes
/// the manifest CSV. Returns the manifest rows in generation order.
pub fn build_corpus(
    src_dir: &Path,
    out_dir: &Path,
    manifest_path: &Path,
    opts: &CorpusOptions,
) -> Result<Vec<ManifestRow>> {
    let sources = list_images(src_dir)?;
    if sources.is_empty() {
        return Err(Error::Domain(format!(
            "no PNG or JPEG files found in {}",
            src_dir.display()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let mut rows = Vec::new();
    let mut ordinal: u64 = 0;
    for (i, src) in sources.iter().enumerate() {
        let img = load_grayscale(src)?;
        let stem = src
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("image{i}"));

        let mut emit = |suffix: String, out_img: &GrayImage, kind: &str, parameter: f64, seed: u64, label: &str| -> Result<()> {
            let out_path = out_dir.join(format!("{stem}__{suffix}.png"));
            write_png(out_img, &out_path)?;
            rows.push(ManifestRow {
                source_path: src.to_string_lossy().into_owned(),
                output_path: out_path.to_string_lossy().into_owned(),
                kind: kind.into(),
                parameter,
                rng_seed: seed,
                label: label.into(),
            });
            Ok(())
        };

        for &q in &opts.jpeg_qualities {
            let seed = opts.base_seed + ordinal;
            ordinal += 1;
            let out = jpeg_compress(&img, q)?;
            emit(format!("jpeg_q{q}"), &out, "jpeg", q as f64, seed, "original")?;
        }
        for &d in &opts.saltpepper_densities {
            let seed = opts.base_seed + ordinal;
            ordinal += 1;
            let out = salt_pepper(&img, d, seed)?;
            emit(
                format!("saltpepper_d{}", fmt_param(d)),
                &out,
                "saltpepper",
                d,
                seed,
                "original",
            )?;
        }
        for &f in &opts.tamper_fractions {
            let seed = opts.base_seed + ordinal;
            ordinal += 1;
            let donor_img;
            let donor = if opts.tamper_mode == TamperMode::Splice {
                let donor_path = &sources[(i + 1) % sources.len()];
                donor_img = load_grayscale(donor_path)?;
                Some(&donor_img)
            } else {
                None
            };
            let spec = TamperSpec {
                area_fraction: f,
                mode: opts.tamper_mode,
                rng_seed: seed,
            };
            let (out, _region) = tamper_patch(&img, &spec, donor)?;
            emit(
                format!("tamper_f{}", fmt_param(f)),
                &out,
                "tamper",
                f,
                seed,
                "tampered",
            )?;
        }
    }

    write_manifest(manifest_path, &rows)?;
    Ok(rows)
}

fn fmt_param(v: f64) -> String {
    format!("{v}").replace('.', "p")
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase());
        if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            files.push(path);
        }
    }
    files.sort(); // read_dir order is platform-dependent
    Ok(files)
}

/// Writes manifest rows as CSV with a header.
pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Reads a manifest CSV produced by [`write_manifest`] (or hand-written for
/// external corpora in the same schema).
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row.map_err(|e| csv_error(path, e))?);
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Domain(format!("csv error on {}: {e}", path.display()))
}
