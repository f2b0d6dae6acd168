//! Compact perceptual image hashing for tamper detection.
//!
//! The pipeline detects blob-like interest points with a box-filter Hessian
//! detector (SURF-style, driven by an integral image), clusters the keypoint
//! locations with k-means, and transmits the cluster centers as the hash.
//! The receiver re-detects keypoints, re-runs k-means seeded with the
//! received centers, and compares the two center sets: a small minimum
//! displacement means the image survived only content-preserving operations,
//! a large one means it was tampered with.
//!
//! Modules mirror the pipeline stages:
//!
//! * [`image_io`] — decoding files into the canonical grayscale representation
//! * [`integral`] — integral image and constant-time box sums
//! * [`surf`] — the Hessian blob detector and scale-space maxima search
//! * [`kmeans`] — k-means++ seeding and Lloyd iteration over 2-D points
//! * [`hash`] — hash generation and the binary wire codec
//! * [`verify`] — receiver-side recomputation and the threshold decision
//! * [`attacks`] — content-preserving attacks, tamper patches, corpus building
//! * [`harness`] — the k-sweep, threshold-calibration, and corpus-evaluation
//!   experiments

pub mod attacks;
pub mod error;
pub mod harness;
pub mod hash;
pub mod image_io;
pub mod integral;
pub mod kmeans;
pub mod surf;
pub mod verify;

pub use error::{Error, Result};
pub use hash::{decode_hash, encode_hash, generate_hash, ImageHash};
pub use image_io::{load_grayscale, GrayImage};
pub use integral::{to_integral, BoxRegion, IntegralImage};
pub use kmeans::{kmeans_pp_init, lloyd, ClusterResult, KMeansConfig, Point};
pub use surf::{detect_keypoints, DetectorConfig, KeyPoint};
pub use verify::{verify, Threshold, VerificationReport, Verdict};
