//! k-means over 2-D keypoint locations: k-means++ seeding for the sender,
//! caller-supplied seeds for the receiver, Lloyd iteration for both.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A 2-D point in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn squared_distance(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(self, other: Point) -> f64 {
        self.squared_distance(other).sqrt()
    }
}

/// Clustering parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    /// Number of clusters; the hash length is `8 * k` bytes.
    pub k: usize,
    pub max_iterations: usize,
    /// Convergence criterion: maximum center displacement per iteration, in
    /// pixels. Coordinate stability is what the hash cares about.
    pub tolerance: f64,
    /// Seed for the k-means++ draws; the receiver never uses it.
    pub rng_seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 1,
            max_iterations: 100,
            tolerance: 1e-6,
            rng_seed: 0,
        }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Domain("k must be >= 1".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::Domain("max_iterations must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Domain("tolerance must be > 0".into()));
        }
        Ok(())
    }
}

/// Result of a Lloyd run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// Final centers; center `i` descends from seed `i`.
    pub centers: Vec<Point>,
    /// Index of the center each input point was last assigned to.
    pub assignments: Vec<usize>,
    /// Sum of squared distances from points to their assigned centers.
    pub objective: f64,
    /// Assignment/update rounds performed.
    pub iterations: usize,
    pub converged: bool,
    /// Objective after the assignment phase of each iteration.
    pub objective_trace: Vec<f64>,
}

/// Draws `k` initial centers from `points` with the k-means++ rule:
/// the first uniformly, each following one with probability proportional to
/// its squared distance to the nearest chosen center. Deterministic given
/// `rng_seed`. Once every remaining squared distance is zero the draw falls
/// back to uniform, so duplicates appear only when unavoidable.
pub fn kmeans_pp_init(points: &[Point], k: usize, rng_seed: u64) -> Result<Vec<Point>> {
    if points.is_empty() {
        return Err(Error::Domain("cannot seed k-means on an empty point set".into()));
    }
    if k < 1 {
        return Err(Error::Domain("k must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut centers = Vec::with_capacity(k);
    let first = points[rng.random_range(0..points.len())];
    centers.push(first);
    let mut d2: Vec<f64> = points.iter().map(|p| p.squared_distance(first)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            weighted_draw(&d2, rng.random::<f64>() * total)
        } else {
            rng.random_range(0..points.len())
        };
        let chosen = points[idx];
        centers.push(chosen);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(p.squared_distance(chosen));
        }
    }
    Ok(centers)
}

/// First index whose running weight sum exceeds `target`. Zero-weight entries
/// cannot win because they never move the running sum past the target.
fn weighted_draw(weights: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if acc > target {
            return i;
        }
    }
    // float round-off pushed target past the final accumulated sum; take the
    // last positive-weight entry
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .expect("total weight was positive")
}

/// Lloyd's algorithm from the given seeds.
///
/// Assignment breaks ties toward the lowest center index; updates recompute
/// each center as the mean of its points; a cluster left empty is re-seeded
/// at the point currently farthest from its assigned center before the next
/// iteration. Convergence is declared when no center moves more than
/// `cfg.tolerance`.
pub fn lloyd(points: &[Point], init_centers: &[Point], cfg: &KMeansConfig) -> Result<ClusterResult> {
    cfg.validate()?;
    if points.is_empty() {
        return Err(Error::Domain("cannot cluster an empty point set".into()));
    }
    if init_centers.len() != cfg.k {
        return Err(Error::Domain(format!(
            "got {} seeds for k = {}",
            init_centers.len(),
            cfg.k
        )));
    }

    let k = cfg.k;
    let mut centers = init_centers.to_vec();
    let mut assignments = vec![0usize; points.len()];
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=cfg.max_iterations {
        iterations = iter;

        // assignment: nearest center, ties to the lowest index
        let mut objective = KahanSum::default();
        for (slot, p) in assignments.iter_mut().zip(points) {
            let mut best = 0usize;
            let mut best_d = p.squared_distance(centers[0]);
            for (j, c) in centers.iter().enumerate().skip(1) {
                let d = p.squared_distance(*c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            *slot = best;
            objective.add(best_d);
        }
        let objective = objective.value();
        if let Some(&prev) = trace.last() {
            debug_assert!(
                objective <= prev + 1e-9 * prev.abs().max(1.0),
                "objective increased: {prev} -> {objective}"
            );
        }
        trace.push(objective);

        // update: means of assigned points, Kahan-compensated
        let mut sum_x = vec![KahanSum::default(); k];
        let mut sum_y = vec![KahanSum::default(); k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points) {
            sum_x[a].add(p.x);
            sum_y[a].add(p.y);
            counts[a] += 1;
        }
        let mut new_centers = centers.clone();
        for j in 0..k {
            if counts[j] > 0 {
                new_centers[j] = Point::new(
                    sum_x[j].value() / counts[j] as f64,
                    sum_y[j].value() / counts[j] as f64,
                );
            }
        }

        // re-seed empty clusters at the farthest point from its own center
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let far = (0..points.len())
                .max_by(|&a, &b| {
                    let da = points[a].squared_distance(new_centers[assignments[a]]);
                    let db = points[b].squared_distance(new_centers[assignments[b]]);
                    da.partial_cmp(&db).unwrap().then(b.cmp(&a)) // ties to the lowest index
                })
                .expect("points is non-empty");
            new_centers[j] = points[far];
            assignments[far] = j;
        }

        let displacement = centers
            .iter()
            .zip(&new_centers)
            .map(|(a, b)| a.distance(*b))
            .fold(0.0f64, f64::max);
        centers = new_centers;
        if displacement < cfg.tolerance {
            converged = true;
            break;
        }
    }

    // objective consistent with the returned centers and assignments
    let mut objective = KahanSum::default();
    for (&a, p) in assignments.iter().zip(points) {
        objective.add(p.squared_distance(centers[a]));
    }

    Ok(ClusterResult {
        centers,
        assignments,
        objective: objective.value(),
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Compensated summation; center means must not drift with point order.
#[derive(Debug, Clone, Copy, Default)]
struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}
