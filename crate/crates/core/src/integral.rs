//! Integral image: cumulative sums enabling constant-time box-filter sums.

use crate::error::{Error, Result};
use crate::image_io::GrayImage;

/// Cumulative-sum table over a source image.
///
/// `table[y][x]` holds the sum of all source pixels `(i, j)` with `i <= x`
/// and `j <= y` (inclusive convention). Accumulation is double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    table: Vec<f64>,
}

/// Inclusive rectangular pixel region: `(x0, y0)` top-left, `(x1, y1)`
/// bottom-right, both inside the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxRegion {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoxRegion {
    /// Fails unless `x0 <= x1` and `y0 <= y1`. Image bounds are checked by
    /// [`IntegralImage::box_sum`].
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x0 > x1 || y0 > y1 {
            return Err(Error::Domain(format!(
                "degenerate region ({x0},{y0})-({x1},{y1})"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }
}

/// Builds the integral image of `img` in a single pass.
pub fn to_integral(img: &GrayImage) -> IntegralImage {
    let (w, h) = (img.width(), img.height());
    let src = img.pixels();
    let mut table = vec![0.0f64; w * h];
    for y in 0..h {
        let mut row_sum = 0.0f64;
        for x in 0..w {
            row_sum += src[y * w + x];
            table[y * w + x] = row_sum + if y > 0 { table[(y - 1) * w + x] } else { 0.0 };
        }
    }
    IntegralImage {
        width: w,
        height: h,
        table,
    }
}

impl IntegralImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Table lookup with out-of-range low indices treated as zero.
    /// Callers must keep `x < width` and `y < height`.
    #[inline]
    fn at(&self, x: isize, y: isize) -> f64 {
        if x < 0 || y < 0 {
            0.0
        } else {
            self.table[y as usize * self.width + x as usize]
        }
    }

    /// Sum over the inclusive rectangle, assuming in-bounds corners.
    #[inline]
    pub(crate) fn rect(&self, x0: isize, y0: isize, x1: isize, y1: isize) -> f64 {
        debug_assert!(x0 <= x1 && y0 <= y1);
        debug_assert!(x1 < self.width as isize && y1 < self.height as isize);
        self.at(x1, y1) - self.at(x0 - 1, y1) - self.at(x1, y0 - 1) + self.at(x0 - 1, y0 - 1)
    }

    /// Sum of source pixels inside `r`, in four table lookups.
    pub fn box_sum(&self, r: BoxRegion) -> Result<f64> {
        if r.x1 >= self.width || r.y1 >= self.height {
            return Err(Error::Bounds(format!(
                "region ({},{})-({},{}) exceeds {}x{} image",
                r.x0, r.y0, r.x1, r.y1, self.width, self.height
            )));
        }
        Ok(self.rect(r.x0 as isize, r.y0 as isize, r.x1 as isize, r.y1 as isize))
    }

    /// Total sum of all source pixels.
    pub fn total(&self) -> f64 {
        self.table[self.width * self.height - 1]
    }
}
