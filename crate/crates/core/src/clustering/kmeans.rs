//! Lloyd's algorithm with k-means++ seeding.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{order_groups, prepare, sq_dist, AttributeVector, ClusterError, ClusterMethod, ClusterResult};

pub(crate) struct Lloyd {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = points[next].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

pub(crate) fn lloyd(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize, tol: f64) -> Lloyd {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = points[0].len();
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut labels = vec![0; points.len()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut dist = vec![0.0; points.len()];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            labels[i] = c;
            dist[i] = d;
        }

        // An empty cluster takes the point farthest from its own centroid,
        // drawn from clusters that can spare one.
        let mut sizes = vec![0usize; k];
        for &l in &labels {
            sizes[l] += 1;
        }
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let donor = (0..points.len())
                .filter(|&i| sizes[labels[i]] > 1)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
            if let Some(i) = donor {
                sizes[labels[i]] -= 1;
                labels[i] = c;
                sizes[c] = 1;
                dist[i] = 0.0;
            }
        }

        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &l) in points.iter().zip(&labels) {
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if sizes[c] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            shift = shift.max(sq_dist(&mean, &centroids[c]).sqrt());
            centroids[c] = mean;
        }
        let wcss: f64 = points
            .iter()
            .zip(&labels)
            .map(|(p, &l)| sq_dist(p, &centroids[l]))
            .sum();
        trace.push(wcss);
        if shift < tol {
            converged = true;
            break;
        }
    }

    Lloyd {
        centroids,
        labels,
        iterations,
        converged,
        trace,
    }
}

/// K-means over attribute vectors. Deterministic for fixed `(vectors, k, seed)`.
pub fn kmeans(
    vectors: &[AttributeVector],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterResult, ClusterError> {
    let prepared = prepare(vectors, k, max_iter, tol)?;
    let run = lloyd(&prepared.points, k, seed, max_iter, tol);
    let assignments: BTreeMap<_, _> = prepared.ids.into_iter().zip(run.labels).collect();
    Ok(ClusterResult {
        method: ClusterMethod::KMeans,
        k,
        group_order: order_groups(&assignments, k),
        assignments,
        centroids: run.centroids,
        seed,
        iterations_run: run.iterations,
        converged: run.converged,
        trace: run.trace,
        variances: None,
        weights: None,
    })
}

#[cfg(test)]
mod tests {
    use super::super::adjusted_rand_index;
    use super::super::testutil::*;
    use super::*;

    #[test]
    fn two_points_two_clusters() {
        let v = vec![vector("0xa", vec![0.0, 0.0]), vector("0xb", vec![1.0, 1.0])];
        let r = kmeans(&v, 2, 1, 100, 1e-9).unwrap();
        assert_ne!(r.assignments[&v[0].project], r.assignments[&v[1].project]);
    }

    #[test]
    fn identical_points_single_cluster() {
        let v: Vec<_> = (0..5).map(|i| vector(&format!("0x{i}"), vec![0.5, 0.25])).collect();
        let r = kmeans(&v, 1, 3, 100, 1e-9).unwrap();
        assert_eq!(r.centroids[0], vec![0.5, 0.25]);
        assert!(r.converged);
        assert_eq!(r.iterations_run, 1);
    }

    #[test]
    fn parameter_errors() {
        let v = vec![vector("0xa", vec![0.0]), vector("0xb", vec![1.0])];
        assert_eq!(kmeans(&v, 0, 0, 10, 1e-6).unwrap_err(), ClusterError::InvalidK(0));
        assert_eq!(
            kmeans(&v, 3, 0, 10, 1e-6).unwrap_err(),
            ClusterError::TooManyClusters { k: 3, n: 2 }
        );
        let bad = vec![vector("0xa", vec![0.0]), vector("0xb", vec![1.0, 2.0])];
        assert!(matches!(kmeans(&bad, 1, 0, 10, 1e-6), Err(ClusterError::ShapeError(_))));
    }

    #[test]
    fn separated_blobs_recovered() {
        for seed in 0..10 {
            let (v, truth) = blobs(12, seed);
            let r = kmeans(&v, 3, seed, 300, 1e-9).unwrap();
            assert_eq!(adjusted_rand_index(&labels_for(&r, &v), &truth).unwrap(), 1.0, "seed {seed}");
        }
    }

    #[test]
    fn objective_never_increases() {
        for seed in 0..20 {
            let (v, _) = blobs(15, seed + 100);
            let r = kmeans(&v, 5, seed, 300, 1e-12).unwrap();
            for w in r.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", r.trace);
            }
        }
    }

    #[test]
    fn empty_clusters_are_refilled() {
        // Duplicates make k-means++ likely to pick coincident seeds.
        let mut v: Vec<_> = (0..6).map(|i| vector(&format!("0xa{i}"), vec![0.0, 0.0])).collect();
        v.push(vector("0xb", vec![1.0, 1.0]));
        v.push(vector("0xc", vec![0.0, 1.0]));
        for seed in 0..20 {
            let r = kmeans(&v, 3, seed, 100, 1e-9).unwrap();
            assert!(r.group_sizes().iter().all(|&s| s > 0), "seed {seed}: {:?}", r.group_sizes());
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let (v, _) = blobs(10, 4);
        assert_eq!(kmeans(&v, 4, 17, 100, 1e-9).unwrap(), kmeans(&v, 4, 17, 100, 1e-9).unwrap());
    }
}
