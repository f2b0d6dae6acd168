//! Python bindings for the surfhash pipeline.
//!
//! Exposes the grayscale image type, hash generation/codec, verification,
//! and the attack primitives. Build with `cargo build -p surfhash-python`
//! and load the resulting cdylib as the module `surfhash_py` (see
//! `python/smoke_test.py` at the repository root).

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use surfhash::attacks::{self, TamperMode, TamperSpec};
use surfhash::hash::{self, ImageHash};
use surfhash::image_io::{self, GrayImage};
use surfhash::kmeans::KMeansConfig;
use surfhash::surf::{self, DetectorConfig};
use surfhash::verify::{self, Threshold};
use surfhash::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn detector_config(
    octaves: usize,
    levels: usize,
    response_threshold: f64,
    max_keypoints: Option<usize>,
) -> DetectorConfig {
    DetectorConfig {
        octaves,
        levels_per_octave: levels,
        response_threshold,
        max_keypoints,
        ..DetectorConfig::default()
    }
}

/// Grayscale image with luminance in [0, 1].
#[pyclass(name = "GrayImage", from_py_object)]
#[derive(Clone)]
struct PyGrayImage {
    inner: GrayImage,
}

#[pymethods]
impl PyGrayImage {
    /// Builds an image from a row-major list of samples in [0, 1].
    #[staticmethod]
    fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: GrayImage::from_pixels(width, height, pixels).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<f64> {
        if x >= self.inner.width() || y >= self.inner.height() {
            return Err(PyValueError::new_err(format!("pixel ({x}, {y}) out of bounds")));
        }
        Ok(self.inner.get(x, y))
    }

    fn pixels(&self) -> Vec<f64> {
        self.inner.pixels().to_vec()
    }

    fn save_png(&self, path: &str) -> PyResult<()> {
        attacks::write_png(&self.inner, path).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("GrayImage({}x{})", self.inner.width(), self.inner.height())
    }
}

/// Transmitted hash: k cluster centers plus metadata.
#[pyclass(name = "ImageHash", from_py_object)]
#[derive(Clone)]
struct PyImageHash {
    inner: ImageHash,
}

#[pymethods]
impl PyImageHash {
    #[staticmethod]
    fn decode(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: hash::decode_hash(data).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn centers(&self) -> Vec<(f64, f64)> {
        self.inner.centers().iter().map(|c| (c.x, c.y)).collect()
    }

    #[getter]
    fn source_width(&self) -> u32 {
        self.inner.source_width()
    }

    #[getter]
    fn source_height(&self) -> u32 {
        self.inner.source_height()
    }

    fn encode<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &hash::encode_hash(&self.inner))
    }

    fn text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "ImageHash(k={}, source={}x{})",
            self.inner.k(),
            self.inner.source_width(),
            self.inner.source_height()
        )
    }
}

/// Verification outcome.
#[pyclass(name = "VerificationReport")]
struct PyVerificationReport {
    #[pyo3(get)]
    min_distance: Option<f64>,
    #[pyo3(get)]
    per_center_distances: Vec<f64>,
    #[pyo3(get)]
    threshold: f64,
    #[pyo3(get)]
    verdict: String,
    #[pyo3(get)]
    degenerate: bool,
    #[pyo3(get)]
    iterations: usize,
}

#[pymethods]
impl PyVerificationReport {
    fn __repr__(&self) -> String {
        format!(
            "VerificationReport(verdict={:?}, min_distance={:?})",
            self.verdict, self.min_distance
        )
    }
}

/// Loads a PNG or JPEG file as a grayscale image.
#[pyfunction]
fn load_image(path: &str) -> PyResult<PyGrayImage> {
    Ok(PyGrayImage {
        inner: image_io::load_grayscale(path).map_err(to_py_err)?,
    })
}

/// Detects keypoints; returns (x, y, scale, response) tuples sorted by
/// descending response.
#[pyfunction]
#[pyo3(signature = (img, octaves=4, levels=4, response_threshold=1e-4, max_keypoints=None))]
fn detect_keypoints(
    img: &PyGrayImage,
    octaves: usize,
    levels: usize,
    response_threshold: f64,
    max_keypoints: Option<usize>,
) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let cfg = detector_config(octaves, levels, response_threshold, max_keypoints);
    let kps = surf::detect_keypoints(&img.inner, &cfg).map_err(to_py_err)?;
    Ok(kps.iter().map(|kp| (kp.x, kp.y, kp.scale, kp.response)).collect())
}

/// Generates the hash of an image.
#[pyfunction]
#[pyo3(signature = (img, k=1, seed=0, octaves=4, levels=4, response_threshold=1e-4, max_keypoints=None))]
#[allow(clippy::too_many_arguments)]
fn generate_hash(
    img: &PyGrayImage,
    k: usize,
    seed: u64,
    octaves: usize,
    levels: usize,
    response_threshold: f64,
    max_keypoints: Option<usize>,
) -> PyResult<PyImageHash> {
    let dcfg = detector_config(octaves, levels, response_threshold, max_keypoints);
    let kcfg = KMeansConfig {
        k,
        rng_seed: seed,
        ..KMeansConfig::default()
    };
    Ok(PyImageHash {
        inner: hash::generate_hash(&img.inner, &dcfg, &kcfg).map_err(to_py_err)?,
    })
}

/// Verifies an image against a received hash.
#[pyfunction]
#[pyo3(signature = (img, received, threshold=2.3922, octaves=4, levels=4, response_threshold=1e-4, max_keypoints=None))]
#[allow(clippy::too_many_arguments)]
fn verify_image(
    img: &PyGrayImage,
    received: &PyImageHash,
    threshold: f64,
    octaves: usize,
    levels: usize,
    response_threshold: f64,
    max_keypoints: Option<usize>,
) -> PyResult<PyVerificationReport> {
    let dcfg = detector_config(octaves, levels, response_threshold, max_keypoints);
    let kcfg = KMeansConfig {
        k: received.inner.k(),
        ..KMeansConfig::default()
    };
    let t = Threshold::new(threshold).map_err(to_py_err)?;
    let report = verify::verify(&img.inner, &received.inner, t, &dcfg, &kcfg).map_err(to_py_err)?;
    Ok(PyVerificationReport {
        min_distance: report.min_distance,
        per_center_distances: report.per_center_distances,
        threshold: report.threshold,
        verdict: match report.verdict {
            verify::Verdict::Authentic => "authentic".into(),
            verify::Verdict::Tampered => "tampered".into(),
        },
        degenerate: report.degenerate,
        iterations: report.iterations,
    })
}

/// JPEG round trip at the given quality.
#[pyfunction]
fn jpeg_compress(img: &PyGrayImage, quality: u8) -> PyResult<PyGrayImage> {
    Ok(PyGrayImage {
        inner: attacks::jpeg_compress(&img.inner, quality).map_err(to_py_err)?,
    })
}

/// Salt-and-pepper noise at the given density.
#[pyfunction]
#[pyo3(signature = (img, density, seed=0))]
fn salt_pepper(img: &PyGrayImage, density: f64, seed: u64) -> PyResult<PyGrayImage> {
    Ok(PyGrayImage {
        inner: attacks::salt_pepper(&img.inner, density, seed).map_err(to_py_err)?,
    })
}

/// Plants a tamper patch; returns the image and the patch rectangle as
/// (x0, y0, x1, y1) inclusive.
#[pyfunction]
#[pyo3(signature = (img, area_fraction, mode="noise", seed=0, donor=None))]
fn tamper_patch(
    img: &PyGrayImage,
    area_fraction: f64,
    mode: &str,
    seed: u64,
    donor: Option<&PyGrayImage>,
) -> PyResult<(PyGrayImage, (usize, usize, usize, usize))> {
    let spec = TamperSpec {
        area_fraction,
        mode: TamperMode::parse(mode).map_err(to_py_err)?,
        rng_seed: seed,
    };
    let (out, region) =
        attacks::tamper_patch(&img.inner, &spec, donor.map(|d| &d.inner)).map_err(to_py_err)?;
    Ok((
        PyGrayImage { inner: out },
        (region.x0, region.y0, region.x1, region.y1),
    ))
}

#[pymodule]
fn surfhash_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrayImage>()?;
    m.add_class::<PyImageHash>()?;
    m.add_class::<PyVerificationReport>()?;
    m.add_function(wrap_pyfunction!(load_image, m)?)?;
    m.add_function(wrap_pyfunction!(detect_keypoints, m)?)?;
    m.add_function(wrap_pyfunction!(generate_hash, m)?)?;
    m.add_function(wrap_pyfunction!(verify_image, m)?)?;
    m.add_function(wrap_pyfunction!(jpeg_compress, m)?)?;
    m.add_function(wrap_pyfunction!(salt_pepper, m)?)?;
    m.add_function(wrap_pyfunction!(tamper_patch, m)?)?;
    m.add("DEFAULT_THRESHOLD", verify::DEFAULT_THRESHOLD)?;
    Ok(())
}
