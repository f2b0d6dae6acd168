//! Decoding image files into the canonical grayscale float representation.
//!
//! Every stage downstream of this module works on [`GrayImage`]: row-major
//! luminance in `[0, 1]`. Color inputs are converted with the BT.601 luma
//! weights (0.299, 0.587, 0.114); alpha channels are dropped.

use std::path::Path;

use image::DynamicImage;

use crate::error::{Error, Result};

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// A grayscale image with luminance values in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// Builds an image from row-major luminance samples.
    ///
    /// Fails if the dimensions are zero, the buffer length does not match
    /// `width * height`, or any sample falls outside `[0, 1]`.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain(format!(
                "image dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Domain(format!(
                "pixel buffer length {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!(
                "pixel value {v} outside [0, 1]"
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::from_pixels(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major luminance samples.
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// Luminance at `(x, y)`. Panics if out of bounds.
    pub fn get(&self, x: usize, y: usize) -> f64 {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) out of bounds");
        self.pixels[y * self.width + x]
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    /// Quantizes to 8-bit samples (round-to-nearest), for re-encoding.
    pub(crate) fn to_u8_samples(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

/// Loads a PNG or JPEG file as a [`GrayImage`].
///
/// 8-bit samples map to `[0, 1]` by `v / 255`; color inputs are reduced with
/// the BT.601 luma weights first. Only 8-bit gray/rgb (with or without alpha)
/// sources are accepted.
pub fn load_grayscale(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| Error::ImageFormat {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    from_dynamic(decoded).map_err(|e| match e {
        Error::Codec(reason) => Error::ImageFormat {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })
}

/// Converts a decoded image to the canonical grayscale form.
pub(crate) fn from_dynamic(img: DynamicImage) -> Result<GrayImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Codec("image has a zero dimension".into()));
    }
    let pixels: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(buf) => buf
            .pixels()
            .map(|p| p.0[0] as f64 / 255.0) // alpha dropped
            .collect(),
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
        DynamicImage::ImageRgba8(buf) => buf.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
        other => {
            return Err(Error::Codec(format!(
                "unsupported pixel format {:?}; only 8-bit grayscale or RGB(A) inputs are handled",
                other.color()
            )))
        }
    };
    GrayImage::from_pixels(w, h, pixels)
}

fn luma(r: u8, g: u8, b: u8) -> f64 {
    let y = LUMA_R * (r as f64 / 255.0) + LUMA_G * (g as f64 / 255.0) + LUMA_B * (b as f64 / 255.0);
    y.min(1.0)
}
