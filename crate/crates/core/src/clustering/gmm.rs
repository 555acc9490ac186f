//! Gaussian mixture with diagonal covariances, fitted by EM from a K-means start.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::kmeans::lloyd;
use super::{order_groups, prepare, sq_dist, AttributeVector, ClusterError, ClusterMethod, ClusterResult};

fn log_density(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((xi, mi), vi) in x.iter().zip(mean).zip(var) {
        acc -= 0.5 * ((2.0 * PI * vi).ln() + (xi - mi) * (xi - mi) / vi);
    }
    acc
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Fits a `k`-component mixture. `trace` holds the log-likelihood before each
/// M-step; under exact arithmetic it never decreases.
pub fn gmm(
    vectors: &[AttributeVector],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
    covariance_floor: f64,
) -> Result<ClusterResult, ClusterError> {
    if !(covariance_floor > 0.0 && covariance_floor.is_finite()) {
        return Err(ClusterError::InvalidParameter("covariance floor must be positive".into()));
    }
    let prepared = prepare(vectors, k, max_iter, tol)?;
    let points = &prepared.points;
    let n = points.len();
    let dim = points[0].len();

    let init = lloyd(points, k, seed, max_iter, tol);
    let mut means = init.centroids;
    let mut vars = vec![vec![0.0f64; dim]; k];
    let mut weights = vec![0.0f64; k];
    for (p, &l) in points.iter().zip(&init.labels) {
        weights[l] += 1.0;
        for d in 0..dim {
            vars[l][d] += (p[d] - means[l][d]).powi(2);
        }
    }
    for c in 0..k {
        for v in vars[c].iter_mut() {
            *v = (*v / weights[c].max(1.0)).max(covariance_floor);
        }
        weights[c] = weights[c].max(1.0) / n as f64;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let mut resp = vec![vec![0.0; k]; n];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut logp = vec![0.0; k];

    while iterations < max_iter {
        iterations += 1;

        // E-step.
        let mut ll = 0.0;
        for (i, x) in points.iter().enumerate() {
            for c in 0..k {
                logp[c] = if weights[c] > 0.0 {
                    weights[c].ln() + log_density(x, &means[c], &vars[c])
                } else {
                    f64::NEG_INFINITY
                };
            }
            let norm = log_sum_exp(&logp);
            ll += norm;
            for c in 0..k {
                resp[i][c] = (logp[c] - norm).exp();
            }
        }
        if !ll.is_finite() {
            return Err(ClusterError::NumericalFailure { iteration: iterations });
        }
        let previous = trace.last().copied();
        trace.push(ll);
        if let Some(prev) = previous {
            if (ll - prev).abs() < tol * ll.abs().max(1.0) {
                converged = true;
                break;
            }
        }

        // M-step.
        for c in 0..k {
            let nc: f64 = resp.iter().map(|r| r[c]).sum();
            if nc < 1e-12 {
                weights[c] = 0.0;
                continue;
            }
            weights[c] = nc / n as f64;
            for d in 0..dim {
                means[c][d] = resp.iter().zip(points).map(|(r, p)| r[c] * p[d]).sum::<f64>() / nc;
            }
            for d in 0..dim {
                let v = resp
                    .iter()
                    .zip(points)
                    .map(|(r, p)| r[c] * (p[d] - means[c][d]).powi(2))
                    .sum::<f64>()
                    / nc;
                vars[c][d] = v.max(covariance_floor);
            }
        }
    }

    let labels: Vec<usize> = resp
        .iter()
        .zip(points)
        .map(|(r, p)| {
            // Argmax, ties by nearer mean then lower index.
            (0..k)
                .max_by(|&a, &b| {
                    r[a].total_cmp(&r[b])
                        .then_with(|| sq_dist(p, &means[b]).total_cmp(&sq_dist(p, &means[a])))
                        .then(b.cmp(&a))
                })
                .unwrap_or(0)
        })
        .collect();
    let assignments: BTreeMap<_, _> = prepared.ids.into_iter().zip(labels).collect();
    Ok(ClusterResult {
        method: ClusterMethod::Gmm,
        k,
        group_order: order_groups(&assignments, k),
        assignments,
        centroids: means,
        seed,
        iterations_run: iterations,
        converged,
        trace,
        variances: Some(vars),
        weights: Some(weights),
    })
}
