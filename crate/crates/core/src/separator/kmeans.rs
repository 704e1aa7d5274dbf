use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SepError;

const RESTARTS: usize = 10;
const MAX_ITER: usize = 300;
const REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// k×d, row-major.
    pub centroids: Vec<f64>,
    pub inertia: f64,
    /// Inertia after every Lloyd iteration of the kept restart.
    pub history: Vec<f64>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[f64], d: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.chunks(d).enumerate() {
        let dd = dist2(p, row);
        if dd < best.1 {
            best = (c, dd);
        }
    }
    best
}

fn plus_plus(points: &[f64], m: usize, d: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k * d);
    let first = rng.random_range(0..m);
    centroids.extend_from_slice(&points[first * d..(first + 1) * d]);
    let mut dmin: Vec<f64> = (0..m).map(|i| dist2(&points[i * d..(i + 1) * d], &centroids[..d])).collect();
    for _ in 1..k {
        let total: f64 = dmin.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = m - 1;
            for (i, &w) in dmin.iter().enumerate() {
                if r < w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            rng.random_range(0..m)
        };
        let c = points[pick * d..(pick + 1) * d].to_vec();
        for (i, dm) in dmin.iter_mut().enumerate() {
            *dm = dm.min(dist2(&points[i * d..(i + 1) * d], &c));
        }
        centroids.extend_from_slice(&c);
    }
    centroids
}

fn lloyd(points: &[f64], m: usize, d: usize, k: usize, mut centroids: Vec<f64>) -> KMeansResult {
    let mut labels = vec![0; m];
    let mut history = Vec::new();
    let mut prev = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let mut inertia = 0.0;
        for i in 0..m {
            let (c, dd) = nearest(&points[i * d..(i + 1) * d], &centroids, d);
            labels[i] = c;
            inertia += dd;
        }
        history.push(inertia);
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for i in 0..m {
            counts[labels[i]] += 1;
            for j in 0..d {
                sums[labels[i] * d + j] += points[i * d + j];
            }
        }
        for c in 0..k {
            // Empty clusters keep their previous centroid.
            if counts[c] > 0 {
                for j in 0..d {
                    centroids[c * d + j] = sums[c * d + j] / counts[c] as f64;
                }
            }
        }
        let converged = prev.is_finite() && (prev - inertia).abs() <= REL_TOL * prev.max(f64::MIN_POSITIVE);
        prev = inertia;
        if converged || inertia == 0.0 {
            break;
        }
    }
    // Final assignment against the updated centroids.
    let mut inertia = 0.0;
    for i in 0..m {
        let (c, dd) = nearest(&points[i * d..(i + 1) * d], &centroids, d);
        labels[i] = c;
        inertia += dd;
    }
    history.push(inertia);
    KMeansResult {
        labels,
        centroids,
        inertia,
        history,
    }
}

/// k-means++ seeding followed by Lloyd iterations, best of ten restarts.
/// `points` holds `m` rows of length `d`.
pub fn kmeans(points: &[f64], m: usize, d: usize, k: usize, seed: u64) -> Result<KMeansResult, SepError> {
    if k == 0 || m < k {
        return Err(SepError::TooFewPoints { points: m, k });
    }
    if points.len() != m * d {
        return Err(SepError::Shape(format!("{} values for {m}×{d} points", points.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..RESTARTS {
        let init = plus_plus(points, m, d, k, &mut rng);
        let r = lloyd(points, m, d, k, init);
        if best.as_ref().is_none_or(|b| r.inertia < b.inertia) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one restart"))
}
