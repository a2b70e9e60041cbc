//! Lloyd's k-means with k-means++ seeding.

use rand::Rng as _;

use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
}

impl KMeans {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    pub fn has_empty_cluster(&self) -> bool {
        self.cluster_sizes().iter().any(|&s| s == 0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means++ seeding: first centre uniform, the rest proportional to squared distance.
pub fn kmeans_pp_seeds(points: &[Vec<f64>], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            chosen
        };
        let c = points[idx].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Runs Lloyd iterations from k-means++ seeds. Empty clusters keep their previous centre.
pub fn kmeans(points: &[Vec<f64>], k: usize, max_iters: usize, rng: &mut Rng) -> KMeans {
    assert!(k >= 1 && !points.is_empty());
    let dim = points[0].len();
    let mut centroids = kmeans_pp_seeds(points, k, rng);
    let mut assignments = vec![0; points.len()];
    for iter in 0..max_iters.max(1) {
        let mut changed = iter == 0;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (best, _) = nearest(p, &centroids);
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = assignments
        .iter()
        .zip(points)
        .map(|(&a, p)| sq_dist(p, &centroids[a]))
        .sum();
    KMeans {
        centroids,
        assignments,
        inertia,
    }
}

/// k-means that re-seeds up to `max_reseeds` times when a cluster comes out empty.
/// Returns `None` if every attempt leaves an empty cluster.
pub fn kmeans_nonempty(
    points: &[Vec<f64>],
    k: usize,
    max_iters: usize,
    max_reseeds: usize,
    rng: &mut Rng,
) -> Option<KMeans> {
    for _ in 0..=max_reseeds {
        let km = kmeans(points, k, max_iters, rng);
        if !km.has_empty_cluster() {
            return Some(km);
        }
    }
    None
}
