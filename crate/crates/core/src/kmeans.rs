//! Lloyd's k-means with k-means++ seeding, deterministic given a seed.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct KMeansResult {
    pub centroids: Vec<DVector<f64>>,
    pub assignments: Vec<usize>,
}

/// Picks initial centroids with probability proportional to the squared
/// distance to the nearest centroid chosen so far.
fn seed_plus_plus(points: &[DVector<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].clone());

    let mut nearest_sq: Vec<f64> = points
        .iter()
        .map(|p| (p - &centroids[0]).norm_squared())
        .collect();

    while centroids.len() < k {
        let total: f64 = nearest_sq.iter().sum();
        let next = if total <= 0.0 {
            // All points coincide with an existing centroid; any pick works.
            points[rng.random_range(0..n)].clone()
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in nearest_sq.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            points[chosen].clone()
        };
        for (i, p) in points.iter().enumerate() {
            nearest_sq[i] = nearest_sq[i].min((p - &next).norm_squared());
        }
        centroids.push(next);
    }
    centroids
}

fn nearest_centroid(point: &DVector<f64>, centroids: &[DVector<f64>]) -> usize {
    let mut best = 0;
    let mut best_sq = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = (point - c).norm_squared();
        if d < best_sq {
            best_sq = d;
            best = i;
        }
    }
    best
}

/// Runs k-means++ seeding followed by Lloyd iterations (at most
/// `max_iters`, stopping when no centroid moves more than `tol`).
/// A cluster that empties keeps its previous centroid; callers that
/// cannot tolerate empty clusters should inspect the assignments and
/// re-run with a different seed.
///
/// # Panics
/// Panics if `k` is zero or exceeds the number of points.
pub fn kmeans(points: &[DVector<f64>], k: usize, seed: u64, max_iters: usize, tol: f64) -> KMeansResult {
    assert!(k >= 1, "k must be at least 1");
    assert!(k <= points.len(), "k exceeds number of points");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let mut assignments = vec![0usize; points.len()];

    for _ in 0..max_iters {
        for (i, p) in points.iter().enumerate() {
            assignments[i] = nearest_centroid(p, &centroids);
        }
        let d = points[0].len();
        let mut sums = vec![DVector::<f64>::zeros(d); k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            sums[a] += p;
            counts[a] += 1;
        }
        let mut max_shift = 0.0f64;
        for c in 0..k {
            if counts[c] > 0 {
                let new_centroid = &sums[c] / counts[c] as f64;
                max_shift = max_shift.max((&new_centroid - &centroids[c]).norm());
                centroids[c] = new_centroid;
            }
        }
        if max_shift <= tol {
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        assignments[i] = nearest_centroid(p, &centroids);
    }
    KMeansResult { centroids, assignments }
}
