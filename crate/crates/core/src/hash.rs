//! Hash generation and the compact binary wire format.
//!
//! Wire layout (big-endian throughout):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "IHSH"
//!      4     1  version (1)
//!      5     2  k
//!      7     4  source width
//!     11     4  source height
//!     15     4  configuration fingerprint
//!     19    8k  payload: k pairs of f32 (x, y)
//! ```
//!
//! The payload for `k = 1` is exactly 64 bits: two 32-bit coordinates.

use crate::error::{Error, Result};
use crate::image_io::GrayImage;
use crate::kmeans::{kmeans_pp_init, lloyd, KMeansConfig, Point};
use crate::surf::{detect_keypoints, DetectorConfig};

pub const HASH_MAGIC: [u8; 4] = *b"IHSH";
pub const HASH_VERSION: u8 = 1;
const HEADER_LEN: usize = 19;

/// The transmitted fingerprint: `k` cluster centers over the keypoint
/// locations of the source image, plus enough metadata for the receiver to
/// reject mismatched comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageHash {
    centers: Vec<Point>,
    source_width: u32,
    source_height: u32,
    detector_fingerprint: u32,
}

impl ImageHash {
    /// Validates invariants: at least one center, every coordinate finite and
    /// inside `[0, source dimension)`.
    pub fn new(
        centers: Vec<Point>,
        source_width: u32,
        source_height: u32,
        detector_fingerprint: u32,
    ) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Domain("a hash needs at least one center".into()));
        }
        if centers.len() > u16::MAX as usize {
            return Err(Error::Domain(format!(
                "k = {} does not fit the wire format (max {})",
                centers.len(),
                u16::MAX
            )));
        }
        if source_width == 0 || source_height == 0 {
            return Err(Error::Domain("source dimensions must be at least 1x1".into()));
        }
        for c in &centers {
            let in_range = c.x.is_finite()
                && c.y.is_finite()
                && (0.0..source_width as f64).contains(&c.x)
                && (0.0..source_height as f64).contains(&c.y);
            if !in_range {
                return Err(Error::Domain(format!(
                    "center ({}, {}) outside the {}x{} source image",
                    c.x, c.y, source_width, source_height
                )));
            }
        }
        Ok(Self {
            centers,
            source_width,
            source_height,
            detector_fingerprint,
        })
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn source_width(&self) -> u32 {
        self.source_width
    }

    pub fn source_height(&self) -> u32 {
        self.source_height
    }

    pub fn detector_fingerprint(&self) -> u32 {
        self.detector_fingerprint
    }

    /// Human-readable dump: one center per line, "x y", six decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.centers {
            out.push_str(&format!("{:.6} {:.6}\n", c.x, c.y));
        }
        out
    }
}

/// Stable FNV-1a checksum of the configuration both ends must share.
///
/// The k-means `rng_seed` is deliberately excluded: it is sender-side
/// entropy and never affects the receiver's seeded recomputation.
pub fn config_fingerprint(dcfg: &DetectorConfig, kcfg: &KMeansConfig) -> u32 {
    let mut fnv = Fnv32::new();
    fnv.update(&(dcfg.octaves as u64).to_be_bytes());
    fnv.update(&(dcfg.levels_per_octave as u64).to_be_bytes());
    fnv.update(&(dcfg.base_filter_size as u64).to_be_bytes());
    fnv.update(&dcfg.hessian_weight.to_bits().to_be_bytes());
    fnv.update(&dcfg.response_threshold.to_bits().to_be_bytes());
    fnv.update(
        &match dcfg.max_keypoints {
            Some(m) => m as u64,
            None => u64::MAX,
        }
        .to_be_bytes(),
    );
    fnv.update(&(kcfg.k as u64).to_be_bytes());
    fnv.update(&(kcfg.max_iterations as u64).to_be_bytes());
    fnv.update(&kcfg.tolerance.to_bits().to_be_bytes());
    fnv.finish()
}

struct Fnv32(u32);

impl Fnv32 {
    fn new() -> Self {
        Self(0x811c9dc5)
    }

    fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u32;
            self.0 = self.0.wrapping_mul(0x0100_0193);
        }
    }

    fn finish(&self) -> u32 {
        self.0
    }
}

/// Sender-side hash generation: detect keypoints, seed with k-means++,
/// run Lloyd, keep the centers.
pub fn generate_hash(
    img: &GrayImage,
    dcfg: &DetectorConfig,
    kcfg: &KMeansConfig,
) -> Result<ImageHash> {
    kcfg.validate()?;
    let keypoints = detect_keypoints(img, dcfg)?;
    if keypoints.is_empty() {
        return Err(Error::NoKeypoints);
    }
    let points: Vec<Point> = keypoints.iter().map(|kp| Point::new(kp.x, kp.y)).collect();
    let seeds = kmeans_pp_init(&points, kcfg.k, kcfg.rng_seed)?;
    let result = lloyd(&points, &seeds, kcfg)?;
    ImageHash::new(
        result.centers,
        img.width() as u32,
        img.height() as u32,
        config_fingerprint(dcfg, kcfg),
    )
}

/// Serializes a hash to the wire format. The payload is `8 * k` bytes.
pub fn encode_hash(hash: &ImageHash) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * hash.k());
    out.extend_from_slice(&HASH_MAGIC);
    out.push(HASH_VERSION);
    out.extend_from_slice(&(hash.k() as u16).to_be_bytes());
    out.extend_from_slice(&hash.source_width.to_be_bytes());
    out.extend_from_slice(&hash.source_height.to_be_bytes());
    out.extend_from_slice(&hash.detector_fingerprint.to_be_bytes());
    for c in &hash.centers {
        out.extend_from_slice(&(c.x as f32).to_be_bytes());
        out.extend_from_slice(&(c.y as f32).to_be_bytes());
    }
    out
}

/// Parses and validates the wire format.
pub fn decode_hash(bytes: &[u8]) -> Result<ImageHash> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::HashFormat(format!(
            "{} bytes is shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if bytes[0..4] != HASH_MAGIC {
        return Err(Error::HashFormat("bad magic".into()));
    }
    if bytes[4] != HASH_VERSION {
        return Err(Error::HashFormat(format!("unsupported version {}", bytes[4])));
    }
    let k = u16::from_be_bytes([bytes[5], bytes[6]]) as usize;
    if k == 0 {
        return Err(Error::HashFormat("k must be >= 1".into()));
    }
    let source_width = u32::from_be_bytes(bytes[7..11].try_into().unwrap());
    let source_height = u32::from_be_bytes(bytes[11..15].try_into().unwrap());
    if source_width == 0 || source_height == 0 {
        return Err(Error::HashFormat("zero source dimension".into()));
    }
    let detector_fingerprint = u32::from_be_bytes(bytes[15..19].try_into().unwrap());
    let expected = HEADER_LEN + 8 * k;
    if bytes.len() != expected {
        return Err(Error::HashFormat(format!(
            "payload length mismatch: k = {k} implies {expected} bytes, got {}",
            bytes.len()
        )));
    }
    let mut centers = Vec::with_capacity(k);
    for i in 0..k {
        let off = HEADER_LEN + 8 * i;
        let x = f32::from_be_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
        let y = f32::from_be_bytes(bytes[off + 4..off + 8].try_into().unwrap()) as f64;
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::HashFormat(format!("center {i} is not finite")));
        }
        centers.push(Point::new(x, y));
    }
    ImageHash::new(centers, source_width, source_height, detector_fingerprint)
        .map_err(|e| Error::HashFormat(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn sample_hash(k: usize) -> ImageHash {
        let centers = (0..k)
            .map(|i| Point::new(10.0 + i as f64, 20.0 + (i * 2) as f64))
            .collect();
        ImageHash::new(centers, 4096, 4096, 0xdeadbeef).unwrap()
    }

    #[test]
    fn k1_payload_is_64_bits() {
        let encoded = encode_hash(&sample_hash(1));
        assert_eq!(encoded.len(), 27);
        assert_eq!(encoded.len() - 19, 8); // 64-bit payload
    }

    #[test]
    fn k3_payload_is_24_bytes() {
        let encoded = encode_hash(&sample_hash(3));
        assert_eq!(encoded.len() - 19, 24);
    }

    #[test]
    fn payload_is_8k_bytes_for_k_up_to_1024() {
        for k in 1..=1024usize {
            let centers = vec![Point::new(1.0, 1.0); k];
            let hash = ImageHash::new(centers, 10, 10, 0).unwrap();
            assert_eq!(encode_hash(&hash).len(), 19 + 8 * k);
        }
    }

    #[test]
    fn encode_decode_round_trip_is_exact_for_representable_coords() {
        // integer-valued coordinates are exact in f32
        let hash = sample_hash(5);
        let decoded = decode_hash(&encode_hash(&hash)).unwrap();
        assert_eq!(decoded, hash);
    }

    #[test]
    fn decode_rejects_malformed_inputs() {
        assert!(matches!(decode_hash(&[]), Err(Error::HashFormat(_))));

        let good = encode_hash(&sample_hash(2));

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_hash(&bad_magic), Err(Error::HashFormat(_))));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(matches!(decode_hash(&bad_version), Err(Error::HashFormat(_))));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(decode_hash(truncated), Err(Error::HashFormat(_))));

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(decode_hash(&trailing), Err(Error::HashFormat(_))));

        // header claims k = 2 but carries a single 8-byte center
        let mut short_payload = encode_hash(&sample_hash(1)).to_vec();
        short_payload[6] = 2;
        assert!(matches!(decode_hash(&short_payload), Err(Error::HashFormat(_))));

        let mut nan_center = good.clone();
        nan_center[19..23].copy_from_slice(&f32::NAN.to_be_bytes());
        assert!(matches!(decode_hash(&nan_center), Err(Error::HashFormat(_))));

        let mut zero_k = good.clone();
        zero_k[5] = 0;
        zero_k[6] = 0;
        assert!(matches!(decode_hash(&zero_k), Err(Error::HashFormat(_))));
    }

    #[test]
    fn fingerprint_distinguishes_configurations_but_not_seeds() {
        let dcfg = DetectorConfig::default();
        let kcfg = KMeansConfig::default();
        let base = config_fingerprint(&dcfg, &kcfg);

        let other_k = KMeansConfig { k: 2, ..kcfg.clone() };
        assert_ne!(base, config_fingerprint(&dcfg, &other_k));

        let other_octaves = DetectorConfig { octaves: 3, ..dcfg.clone() };
        assert_ne!(base, config_fingerprint(&other_octaves, &kcfg));

        let other_threshold = DetectorConfig { response_threshold: 2e-4, ..dcfg.clone() };
        assert_ne!(base, config_fingerprint(&other_threshold, &kcfg));

        let other_seed = KMeansConfig { rng_seed: 999, ..kcfg.clone() };
        assert_eq!(base, config_fingerprint(&dcfg, &other_seed));
    }

    #[test]
    fn constant_image_cannot_be_hashed() {
        let img = GrayImage::from_pixels(64, 64, vec![0.5; 64 * 64]).unwrap();
        let err = generate_hash(&img, &DetectorConfig::default(), &KMeansConfig::default());
        assert!(matches!(err, Err(Error::NoKeypoints)));
    }

    fn textured_image(seed: u64) -> GrayImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(64, 64, |_, _| rng.random::<f64>()).unwrap()
    }

    #[test]
    fn k1_center_is_the_keypoint_centroid() {
        let img = textured_image(4);
        let dcfg = DetectorConfig::default();
        let kcfg = KMeansConfig::default();
        let hash = generate_hash(&img, &dcfg, &kcfg).unwrap();
        assert_eq!(hash.k(), 1);

        let kps = detect_keypoints(&img, &dcfg).unwrap();
        let n = kps.len() as f64;
        let cx = kps.iter().map(|kp| kp.x).sum::<f64>() / n;
        let cy = kps.iter().map(|kp| kp.y).sum::<f64>() / n;
        assert!((hash.centers()[0].x - cx).abs() < 1e-9);
        assert!((hash.centers()[0].y - cy).abs() < 1e-9);
    }

    #[test]
    fn hashing_is_deterministic_for_a_fixed_seed() {
        let img = GrayImage::from_fn(64, 64, |x, y| {
            if (20..28).contains(&x) && (20..28).contains(&y) || (40..48).contains(&x) && (36..44).contains(&y) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let dcfg = DetectorConfig::default();
        let kcfg = KMeansConfig { k: 2, rng_seed: 17, ..KMeansConfig::default() };
        let a = generate_hash(&img, &dcfg, &kcfg).unwrap();
        let b = generate_hash(&img, &dcfg, &kcfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(encode_hash(&a), encode_hash(&b));
    }

    #[test]
    fn text_dump_has_one_center_per_line() {
        let hash = sample_hash(2);
        let text = hash.to_text();
        assert_eq!(text, "10.000000 20.000000\n11.000000 22.000000\n");
    }

    proptest! {
        // decode(encode(h)) must agree with h up to f32 rounding; below 2^11
        // that lands under 1e-4 px (a half-ulp at 2^13 is already ~4.9e-4)
        #[test]
        fn round_trip_is_lossless_up_to_f32_rounding(
            k in 1usize..=16,
            seed in 0u64..10_000,
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let centers: Vec<Point> = (0..k)
                .map(|_| Point::new(rng.random::<f64>() * 8191.0, rng.random::<f64>() * 8191.0))
                .collect();
            let hash = ImageHash::new(centers, 8192, 8192, seed as u32).unwrap();
            let decoded = decode_hash(&encode_hash(&hash)).unwrap();
            prop_assert_eq!(decoded.k(), hash.k());
            prop_assert_eq!(decoded.source_width(), hash.source_width());
            prop_assert_eq!(decoded.source_height(), hash.source_height());
            prop_assert_eq!(decoded.detector_fingerprint(), hash.detector_fingerprint());
            for (a, b) in decoded.centers().iter().zip(hash.centers()) {
                for (got, want) in [(a.x, b.x), (a.y, b.y)] {
                    let f32_ulp = want.abs().max(1.0) * f32::EPSILON as f64;
                    prop_assert!((got - want).abs() <= f32_ulp, "{got} vs {want}");
                    if want < 2048.0 {
                        prop_assert!((got - want).abs() < 1e-4);
                    }
                }
            }
        }
    }
}
