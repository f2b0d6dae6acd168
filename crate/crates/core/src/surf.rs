//! Box-filter Hessian blob detector over an integral-image scale space.
//!
//! Second-order Gaussian derivatives are approximated by rectangular lobes
//! evaluated in constant time on the integral image. The determinant of the
//! approximated Hessian,
//!
//! ```text
//! det(H) = Dxx * Dyy - (w * Dxy)^2        with w = 0.9
//! ```
//!
//! is computed per pixel for a pyramid of filter sizes; interest points are
//! strict maxima over their 26 neighbors in the 3x3x3 scale-space
//! neighborhood. Responses are divided by `filter_size^4` so one threshold
//! works across all scales.

use crate::error::{Error, Result};
use crate::image_io::GrayImage;
use crate::integral::{to_integral, IntegralImage};

/// Smallest (and base) filter size; corresponds to scale sigma = 1.2.
pub const BASE_FILTER_SIZE: usize = 9;

/// Relative weight of the mixed-derivative term in the Hessian determinant.
pub const DEFAULT_HESSIAN_WEIGHT: f64 = 0.9;

/// Detector parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Number of octaves; filter-size steps double per octave.
    pub octaves: usize,
    /// Filter sizes per octave; at least 3, since maxima need a level above
    /// and below.
    pub levels_per_octave: usize,
    /// Base kernel size; fixed at 9.
    pub base_filter_size: usize,
    /// The `w` weight applied to `Dxy` in the determinant.
    pub hessian_weight: f64,
    /// Minimum area-normalized response for a keypoint.
    pub response_threshold: f64,
    /// Optional cap on returned keypoints (strongest kept).
    pub max_keypoints: Option<usize>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            octaves: 4,
            levels_per_octave: 4,
            base_filter_size: BASE_FILTER_SIZE,
            hessian_weight: DEFAULT_HESSIAN_WEIGHT,
            response_threshold: 1e-4,
            max_keypoints: None,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.octaves < 1 {
            return Err(Error::Domain("octaves must be >= 1".into()));
        }
        if self.levels_per_octave < 3 {
            return Err(Error::Domain(
                "levels_per_octave must be >= 3 (maxima need a level above and below)".into(),
            ));
        }
        if self.base_filter_size != BASE_FILTER_SIZE {
            return Err(Error::Domain(format!(
                "base_filter_size is fixed at {BASE_FILTER_SIZE}"
            )));
        }
        if !(self.hessian_weight > 0.0 && self.hessian_weight <= 1.0) {
            return Err(Error::Domain("hessian_weight must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// Filter size at `(octave, level)`: 9,15,21,27 / 15,27,39,51 / ...
    ///
    /// The step is `6 * 2^octave` and each octave starts at the previous
    /// octave's second level.
    pub fn filter_size(&self, octave: usize, level: usize) -> usize {
        let step = 6usize << octave;
        step * (level + 1) + 3
    }
}

/// A detected interest point.
///
/// `x` and `y` are integer pixel coordinates (origin top-left) carried as
/// scalars; no sub-pixel refinement is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyPoint {
    pub x: f64,
    pub y: f64,
    /// Scale: `1.2 * filter_size / 9`.
    pub scale: f64,
    /// Area-normalized Hessian determinant at the maximum.
    pub response: f64,
}

/// Hessian-determinant responses for one filter size, aligned to image
/// pixels. Border pixels the filter overruns are NaN and never compared.
#[derive(Debug, Clone)]
pub struct ResponseMap {
    filter_size: usize,
    width: usize,
    height: usize,
    responses: Vec<f64>,
}

impl ResponseMap {
    pub fn filter_size(&self) -> usize {
        self.filter_size
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Response at `(x, y)`; NaN inside the invalid border band.
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.responses[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.get(x, y).is_finite()
    }

    /// Width of the invalid band on each side.
    pub fn border(&self) -> usize {
        self.filter_size / 2
    }
}

/// A level skipped because its filter exceeds the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OmittedLevel {
    pub octave: usize,
    pub level: usize,
    pub filter_size: usize,
}

/// Response maps grouped by octave, plus a record of omitted levels.
#[derive(Debug, Clone)]
pub struct ResponsePyramid {
    octaves: Vec<Vec<ResponseMap>>,
    omitted: Vec<OmittedLevel>,
}

impl ResponsePyramid {
    pub fn octaves(&self) -> &[Vec<ResponseMap>] {
        &self.octaves
    }

    /// All retained maps, octave-major.
    pub fn maps(&self) -> impl Iterator<Item = &ResponseMap> {
        self.octaves.iter().flatten()
    }

    pub fn omitted(&self) -> &[OmittedLevel] {
        &self.omitted
    }
}

/// Area-normalized Hessian determinant response of one filter placement.
///
/// `filter_size` must be odd, at least 9, and congruent to 9 mod 6 so the
/// three derivative lobes tile evenly; the center must sit at least
/// `filter_size / 2` pixels from every border.
pub fn hessian_response(
    ii: &IntegralImage,
    x: usize,
    y: usize,
    filter_size: usize,
    hessian_weight: f64,
) -> Result<f64> {
    validate_filter_size(filter_size)?;
    let half = filter_size / 2;
    if x < half || y < half || x + half >= ii.width() || y + half >= ii.height() {
        return Err(Error::Bounds(format!(
            "filter {filter_size} at ({x}, {y}) overruns the {}x{} image",
            ii.width(),
            ii.height()
        )));
    }
    Ok(response_at(ii, x as isize, y as isize, filter_size, hessian_weight))
}

fn validate_filter_size(filter_size: usize) -> Result<()> {
    if filter_size < 9 || filter_size % 2 == 0 || filter_size % 6 != 3 {
        return Err(Error::Domain(format!(
            "filter size {filter_size} is not in the 9, 15, 21, ... progression"
        )));
    }
    Ok(())
}

/// Determinant at a placement known to be in bounds.
///
/// Lobe geometry for filter size L with lobe l = L/3 and half h = (L-1)/2,
/// relative to the center pixel:
///   Dxx: band rows -(l-1)..=(l-1), cols -h..=h, minus three times the
///        middle third (cols -(l-1)/2..=(l-1)/2) -- outer lobes +1, middle -2
///   Dyy: the transpose
///   Dxy: four l x l quadrant lobes separated by a one-pixel cross;
///        top-left and bottom-right +1, the other two -1
#[inline]
fn response_at(ii: &IntegralImage, x: isize, y: isize, filter_size: usize, w: f64) -> f64 {
    let l = (filter_size / 3) as isize;
    let h = (filter_size / 2) as isize;
    let m = (l - 1) / 2;

    let dxx = ii.rect(x - h, y - (l - 1), x + h, y + (l - 1))
        - 3.0 * ii.rect(x - m, y - (l - 1), x + m, y + (l - 1));
    let dyy = ii.rect(x - (l - 1), y - h, x + (l - 1), y + h)
        - 3.0 * ii.rect(x - (l - 1), y - m, x + (l - 1), y + m);
    let dxy = ii.rect(x - l, y - l, x - 1, y - 1) + ii.rect(x + 1, y + 1, x + l, y + l)
        - ii.rect(x + 1, y - l, x + l, y - 1)
        - ii.rect(x - l, y + 1, x - 1, y + l);

    let area = filter_size as f64 * filter_size as f64;
    (dxx * dyy - (w * dxy) * (w * dxy)) / (area * area)
}

/// Computes one response map per retained `(octave, level)`.
///
/// Levels whose filter exceeds either image dimension are omitted and
/// recorded. All maps sample every pixel of the original image.
pub fn build_response_pyramid(ii: &IntegralImage, cfg: &DetectorConfig) -> Result<ResponsePyramid> {
    cfg.validate()?;
    let (w, h) = (ii.width(), ii.height());
    let mut octaves = Vec::with_capacity(cfg.octaves);
    let mut omitted = Vec::new();
    for octave in 0..cfg.octaves {
        let mut maps = Vec::new();
        for level in 0..cfg.levels_per_octave {
            let filter_size = cfg.filter_size(octave, level);
            if filter_size > w || filter_size > h {
                omitted.push(OmittedLevel {
                    octave,
                    level,
                    filter_size,
                });
                continue;
            }
            maps.push(compute_response_map(ii, filter_size, cfg.hessian_weight));
        }
        octaves.push(maps);
    }
    Ok(ResponsePyramid { octaves, omitted })
}

fn compute_response_map(ii: &IntegralImage, filter_size: usize, w: f64) -> ResponseMap {
    let (width, height) = (ii.width(), ii.height());
    let border = filter_size / 2;
    let mut responses = vec![f64::NAN; width * height];
    for y in border..height - border {
        for x in border..width - border {
            responses[y * width + x] = response_at(ii, x as isize, y as isize, filter_size, w);
        }
    }
    ResponseMap {
        filter_size,
        width,
        height,
        responses,
    }
}

/// Detects scale-space interest points.
///
/// A pixel becomes a keypoint when its response exceeds the threshold and is
/// a strict maximum over all 26 neighbors in the 3x3x3 neighborhood spanning
/// the adjacent filter sizes of the same octave. Any invalid (border)
/// neighbor disqualifies the candidate, so the first and last level of each
/// octave never yield keypoints. The result is sorted by descending response
/// (ties broken by y, then x, then scale) and truncated to `max_keypoints`.
pub fn detect_keypoints(img: &GrayImage, cfg: &DetectorConfig) -> Result<Vec<KeyPoint>> {
    cfg.validate()?;
    let ii = to_integral(img);
    let pyramid = build_response_pyramid(&ii, cfg)?;
    let mut keypoints = Vec::new();
    for maps in pyramid.octaves() {
        if maps.len() < 3 {
            continue;
        }
        for li in 1..maps.len() - 1 {
            collect_level_maxima(&maps[li - 1], &maps[li], &maps[li + 1], cfg, &mut keypoints);
        }
    }
    sort_keypoints(&mut keypoints);
    if let Some(cap) = cfg.max_keypoints {
        keypoints.truncate(cap);
    }
    Ok(keypoints)
}

fn collect_level_maxima(
    below: &ResponseMap,
    level: &ResponseMap,
    above: &ResponseMap,
    cfg: &DetectorConfig,
    out: &mut Vec<KeyPoint>,
) {
    let (w, h) = (level.width(), level.height());
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let r = level.get(x, y);
            if !r.is_finite() || r <= cfg.response_threshold {
                continue;
            }
            if is_strict_maximum(r, below, level, above, x, y) {
                out.push(KeyPoint {
                    x: x as f64,
                    y: y as f64,
                    scale: 1.2 * level.filter_size() as f64 / 9.0,
                    response: r,
                });
            }
        }
    }
}

/// Strict 26-neighbor check. NaN (invalid) neighbors fail the `>` comparison
/// and therefore reject the candidate.
#[inline]
fn is_strict_maximum(
    r: f64,
    below: &ResponseMap,
    level: &ResponseMap,
    above: &ResponseMap,
    x: usize,
    y: usize,
) -> bool {
    for ny in y - 1..=y + 1 {
        for nx in x - 1..=x + 1 {
            if !(r > below.get(nx, ny)) || !(r > above.get(nx, ny)) {
                return false;
            }
            if (nx, ny) != (x, y) && !(r > level.get(nx, ny)) {
                return false;
            }
        }
    }
    true
}

pub(crate) fn sort_keypoints(keypoints: &mut [KeyPoint]) {
    keypoints.sort_by(|a, b| {
        b.response
            .partial_cmp(&a.response)
            .expect("keypoint responses are finite")
            .then(a.y.partial_cmp(&b.y).unwrap())
            .then(a.x.partial_cmp(&b.x).unwrap())
            .then(a.scale.partial_cmp(&b.scale).unwrap())
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Direct per-pixel lobe summation; independent of the integral-image
    /// path. Weights follow the layout documented on `response_at`.
    fn oracle_response(img: &GrayImage, cx: usize, cy: usize, filter_size: usize, w: f64) -> f64 {
        let l = (filter_size / 3) as isize;
        let h = (filter_size / 2) as isize;
        let m = (l - 1) / 2;
        let (mut dxx, mut dyy, mut dxy) = (0.0f64, 0.0f64, 0.0f64);
        for dy in -h..=h {
            for dx in -h..=h {
                let v = img.get((cx as isize + dx) as usize, (cy as isize + dy) as usize);
                // Dxx: rows within +-(l-1); outer thirds +1, middle -2
                if dy.abs() <= l - 1 {
                    if dx.abs() <= m {
                        dxx += -2.0 * v;
                    } else if dx.abs() <= h {
                        dxx += v;
                    }
                }
                // Dyy: transpose
                if dx.abs() <= l - 1 {
                    if dy.abs() <= m {
                        dyy += -2.0 * v;
                    } else if dy.abs() <= h {
                        dyy += v;
                    }
                }
                // Dxy: quadrants 1..=l from the center cross
                if (1..=l).contains(&dx.abs()) && (1..=l).contains(&dy.abs()) {
                    let sign = if (dx < 0) == (dy < 0) { 1.0 } else { -1.0 };
                    dxy += sign * v;
                }
            }
        }
        let area = filter_size as f64 * filter_size as f64;
        (dxx * dyy - (w * dxy) * (w * dxy)) / (area * area)
    }

    #[test]
    fn constant_image_has_zero_response() {
        let img = GrayImage::from_pixels(32, 32, vec![0.6; 32 * 32]).unwrap();
        let ii = to_integral(&img);
        for &fs in &[9usize, 15, 21] {
            let r = hessian_response(&ii, 15, 15, fs, 0.9).unwrap();
            assert!(r.abs() < 1e-12, "filter {fs}: {r}");
        }
    }

    #[test]
    fn linear_ramp_has_zero_response() {
        let img = GrayImage::from_fn(32, 32, |x, _| x as f64 / 32.0).unwrap();
        let ii = to_integral(&img);
        let r = hessian_response(&ii, 16, 16, 9, 0.9).unwrap();
        assert!(r.abs() < 1e-12, "{r}");
    }

    #[test]
    fn impulse_matches_direct_summation() {
        let img = GrayImage::from_fn(21, 21, |x, y| if (x, y) == (10, 10) { 1.0 } else { 0.0 }).unwrap();
        let ii = to_integral(&img);
        let got = hessian_response(&ii, 10, 10, 9, 0.9).unwrap();
        let want = oracle_response(&img, 10, 10, 9, 0.9);
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        // impulse at the center hits the -2 lobes of Dxx and Dyy and the
        // zero cross of Dxy: det = 4 / 9^4
        assert!((got - 4.0 / 6561.0).abs() < 1e-15);
    }

    #[test]
    fn random_images_match_direct_summation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let img = GrayImage::from_fn(24, 24, |_, _| rng.random::<f64>()).unwrap();
            let ii = to_integral(&img);
            for &fs in &[9usize, 15] {
                let half = fs / 2;
                for y in half..24 - half {
                    for x in half..24 - half {
                        let got = hessian_response(&ii, x, y, fs, 0.9).unwrap();
                        let want = oracle_response(&img, x, y, fs, 0.9);
                        assert!(
                            (got - want).abs() <= 1e-12 + 1e-9 * got.abs().max(want.abs()),
                            "filter {fs} at ({x},{y}): {got} vs {want}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn bad_filter_sizes_are_rejected() {
        let img = GrayImage::from_pixels(32, 32, vec![0.5; 32 * 32]).unwrap();
        let ii = to_integral(&img);
        for fs in [3usize, 7, 10, 11, 12, 13] {
            assert!(matches!(
                hessian_response(&ii, 16, 16, fs, 0.9),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn border_overrun_is_a_bounds_error() {
        let img = GrayImage::from_pixels(16, 16, vec![0.5; 256]).unwrap();
        let ii = to_integral(&img);
        assert!(matches!(hessian_response(&ii, 3, 8, 9, 0.9), Err(Error::Bounds(_))));
        assert!(matches!(hessian_response(&ii, 8, 12, 9, 0.9), Err(Error::Bounds(_))));
    }

    #[test]
    fn pyramid_follows_the_filter_progression() {
        let img = GrayImage::from_pixels(512, 512, vec![0.5; 512 * 512]).unwrap();
        let ii = to_integral(&img);
        let pyr = build_response_pyramid(&ii, &DetectorConfig::default()).unwrap();
        let sizes: Vec<Vec<usize>> = pyr
            .octaves()
            .iter()
            .map(|maps| maps.iter().map(|m| m.filter_size()).collect())
            .collect();
        assert_eq!(
            sizes,
            vec![
                vec![9, 15, 21, 27],
                vec![15, 27, 39, 51],
                vec![27, 51, 75, 99],
                vec![51, 99, 147, 195],
            ]
        );
        assert_eq!(pyr.maps().count(), 16);
        assert!(pyr.omitted().is_empty());
    }

    #[test]
    fn oversized_levels_are_omitted() {
        let img = GrayImage::from_pixels(20, 20, vec![0.5; 400]).unwrap();
        let ii = to_integral(&img);
        let pyr = build_response_pyramid(&ii, &DetectorConfig::default()).unwrap();
        let sizes: Vec<usize> = pyr.maps().map(|m| m.filter_size()).collect();
        assert_eq!(sizes, vec![9, 15, 15]);
        assert_eq!(pyr.omitted().len(), 13);
        assert!(pyr.omitted().iter().all(|o| o.filter_size > 20));
    }

    #[test]
    fn constant_image_yields_no_keypoints() {
        let img = GrayImage::from_pixels(64, 64, vec![0.3; 64 * 64]).unwrap();
        let kps = detect_keypoints(&img, &DetectorConfig::default()).unwrap();
        assert!(kps.is_empty());
    }

    #[test]
    fn white_square_keypoints_cluster_on_the_square() {
        let img = GrayImage::from_fn(64, 64, |x, y| {
            if (28..36).contains(&x) && (28..36).contains(&y) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let kps = detect_keypoints(&img, &DetectorConfig::default()).unwrap();
        assert!(!kps.is_empty());
        for kp in &kps {
            // distance from the keypoint to the square's pixel rectangle;
            // coarse-scale corner maxima sit up to ~7.1 px off the corners
            // (diagonal Dxy lobes fire one lobe-width outside the square)
            let dist_x = (28.0 - kp.x).max(kp.x - 35.0).max(0.0);
            let dist_y = (28.0 - kp.y).max(kp.y - 35.0).max(0.0);
            let dist = (dist_x * dist_x + dist_y * dist_y).sqrt();
            assert!(dist <= 7.5, "keypoint {kp:?} is {dist:.2} px from the square");
        }
    }

    #[test]
    fn detection_is_deterministic() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let img = GrayImage::from_fn(48, 48, |_, _| rng.random::<f64>()).unwrap();
        let a = detect_keypoints(&img, &DetectorConfig::default()).unwrap();
        let b = detect_keypoints(&img, &DetectorConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn returned_maxima_strictly_dominate_their_neighborhood() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let img = GrayImage::from_fn(48, 48, |_, _| rng.random::<f64>()).unwrap();
        let cfg = DetectorConfig::default();
        let kps = detect_keypoints(&img, &cfg).unwrap();
        assert!(!kps.is_empty(), "random noise should produce maxima");

        let ii = to_integral(&img);
        let pyr = build_response_pyramid(&ii, &cfg).unwrap();
        for kp in &kps {
            let (x, y) = (kp.x as usize, kp.y as usize);
            // find the level this keypoint came from
            let mut found = false;
            for maps in pyr.octaves() {
                for li in 1..maps.len().saturating_sub(1) {
                    let m = &maps[li];
                    if (1.2 * m.filter_size() as f64 / 9.0 - kp.scale).abs() > 1e-12 {
                        continue;
                    }
                    if m.get(x, y) != kp.response {
                        continue;
                    }
                    found = true;
                    for (dy, dx) in neighborhood_offsets() {
                        let (nx, ny) = ((x as isize + dx) as usize, (y as isize + dy) as usize);
                        assert!(kp.response > maps[li - 1].get(nx, ny));
                        assert!(kp.response > maps[li + 1].get(nx, ny));
                        if (dx, dy) != (0, 0) {
                            assert!(kp.response > m.get(nx, ny));
                        }
                    }
                }
            }
            assert!(found, "keypoint {kp:?} not traceable to a map");
        }
    }

    fn neighborhood_offsets() -> Vec<(isize, isize)> {
        let mut v = Vec::new();
        for dy in -1..=1 {
            for dx in -1..=1 {
                v.push((dy, dx));
            }
        }
        v
    }

    #[test]
    fn translation_shifts_keypoints_exactly() {
        // content confined to the image center, far from every filter border
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let mut patch = vec![0.0f64; 40 * 40];
        for v in patch.iter_mut() {
            *v = rng.random::<f64>();
        }
        let cfg = DetectorConfig {
            octaves: 2,
            ..DetectorConfig::default()
        };
        let render = |ox: usize, oy: usize| {
            GrayImage::from_fn(128, 128, |x, y| {
                if (ox..ox + 40).contains(&x) && (oy..oy + 40).contains(&y) {
                    patch[(y - oy) * 40 + (x - ox)]
                } else {
                    0.0
                }
            })
            .unwrap()
        };
        let base = detect_keypoints(&render(44, 44), &cfg).unwrap();
        let shifted = detect_keypoints(&render(47, 49), &cfg).unwrap();
        assert!(!base.is_empty());
        assert_eq!(base.len(), shifted.len());
        for (a, b) in base.iter().zip(shifted.iter()) {
            assert_eq!(a.x + 3.0, b.x);
            assert_eq!(a.y + 5.0, b.y);
            assert_eq!(a.scale, b.scale);
            assert_eq!(a.response, b.response);
        }
    }

    #[test]
    fn max_keypoints_caps_the_strongest() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let img = GrayImage::from_fn(64, 64, |_, _| rng.random::<f64>()).unwrap();
        let all = detect_keypoints(&img, &DetectorConfig::default()).unwrap();
        let capped = detect_keypoints(
            &img,
            &DetectorConfig {
                max_keypoints: Some(3),
                ..DetectorConfig::default()
            },
        )
        .unwrap();
        assert_eq!(capped.len(), 3.min(all.len()));
        assert_eq!(&all[..capped.len()], &capped[..]);
        // sorted by descending response
        for w in all.windows(2) {
            assert!(w[0].response >= w[1].response);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let img = GrayImage::from_pixels(16, 16, vec![0.5; 256]).unwrap();
        let bad_octaves = DetectorConfig { octaves: 0, ..DetectorConfig::default() };
        assert!(detect_keypoints(&img, &bad_octaves).is_err());
        let bad_levels = DetectorConfig { levels_per_octave: 2, ..DetectorConfig::default() };
        assert!(detect_keypoints(&img, &bad_levels).is_err());
        let bad_base = DetectorConfig { base_filter_size: 15, ..DetectorConfig::default() };
        assert!(detect_keypoints(&img, &bad_base).is_err());
        let bad_weight = DetectorConfig { hessian_weight: 0.0, ..DetectorConfig::default() };
        assert!(detect_keypoints(&img, &bad_weight).is_err());
    }
}
