//! Grouping projects by attribute similarity with K-means and a diagonal
//! Gaussian mixture.
//!
//! Inputs are sorted by project id before clustering, so the result does not
//! depend on the order the caller passes vectors in.

mod gmm;
mod kmeans;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ProjectId;

pub use crate::mechanisms::AttributeVector;
pub use gmm::gmm;
pub use kmeans::kmeans;

pub const DEFAULT_K: usize = 6;
pub const MIN_USER_K: usize = 2;
pub const MAX_USER_K: usize = 10;
pub const DEFAULT_COVARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("k must be at least 1, got {0}")]
    InvalidK(usize),
    #[error("k = {k} exceeds the {n} input vectors")]
    TooManyClusters { k: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("non-finite log-likelihood at EM iteration {iteration}")]
    NumericalFailure { iteration: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMethod {
    KMeans,
    Gmm,
}

impl fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClusterMethod::KMeans => "kmeans",
            ClusterMethod::Gmm => "gmm",
        })
    }
}

impl FromStr for ClusterMethod {
    type Err = ClusterError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kmeans" | "k-means" => Ok(ClusterMethod::KMeans),
            "gmm" => Ok(ClusterMethod::Gmm),
            other => Err(ClusterError::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub covariance_floor: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            seed: 0,
            max_iter: 300,
            tol: 1e-8,
            covariance_floor: DEFAULT_COVARIANCE_FLOOR,
        }
    }
}

/// Runs the chosen method.
pub fn cluster(
    method: ClusterMethod,
    vectors: &[AttributeVector],
    params: &ClusterParams,
) -> Result<ClusterResult, ClusterError> {
    match method {
        ClusterMethod::KMeans => kmeans(vectors, params.k, params.seed, params.max_iter, params.tol),
        ClusterMethod::Gmm => gmm(
            vectors,
            params.k,
            params.seed,
            params.max_iter,
            params.tol,
            params.covariance_floor,
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub method: ClusterMethod,
    pub k: usize,
    pub assignments: BTreeMap<ProjectId, usize>,
    /// Cluster means, indexed by group.
    pub centroids: Vec<Vec<f64>>,
    /// Groups by member count, largest first.
    pub group_order: Vec<usize>,
    pub seed: u64,
    pub iterations_run: usize,
    pub converged: bool,
    /// Within-cluster sum of squares (K-means) or log-likelihood (GMM) per iteration.
    pub trace: Vec<f64>,
    /// Per-group diagonal variances (GMM only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub variances: Option<Vec<Vec<f64>>>,
    /// Mixture weights (GMM only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weights: Option<Vec<f64>>,
}

impl ClusterResult {
    pub fn group_of(&self, project: &ProjectId) -> Option<usize> {
        self.assignments.get(project).copied()
    }

    pub fn members(&self, group: usize) -> Vec<&ProjectId> {
        self.assignments
            .iter()
            .filter(|(_, &g)| g == group)
            .map(|(p, _)| p)
            .collect()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &g in self.assignments.values() {
            sizes[g] += 1;
        }
        sizes
    }

    /// Assignments relabeled by rank in `group_order` (0 = largest group).
    pub fn canonical_assignments(&self) -> BTreeMap<ProjectId, usize> {
        let mut rank = vec![0; self.k];
        for (r, &g) in self.group_order.iter().enumerate() {
            rank[g] = r;
        }
        self.assignments
            .iter()
            .map(|(p, &g)| (p.clone(), rank[g]))
            .collect()
    }
}

/// Orders groups by member count descending; ties go to the group whose
/// smallest member id sorts first. Empty groups come last by index.
pub fn order_groups(assignments: &BTreeMap<ProjectId, usize>, k: usize) -> Vec<usize> {
    let mut size = vec![0usize; k];
    let mut first: Vec<Option<&ProjectId>> = vec![None; k];
    for (p, &g) in assignments {
        if g >= k {
            continue;
        }
        size[g] += 1;
        // BTreeMap iterates ids in order, so the first seen is the smallest.
        first[g].get_or_insert(p);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        size[b].cmp(&size[a]).then_with(|| match (first[a], first[b]) {
            (Some(x), Some(y)) => x.cmp(y),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.cmp(&b),
        })
    });
    order
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64, ClusterError> {
    if a.len() != b.len() {
        return Err(ClusterError::ShapeError(format!("{} vs {} labels", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let c2 = |m: u64| (m * m.saturating_sub(1) / 2) as f64;
    let index: f64 = table.values().map(|&m| c2(m)).sum();
    let sum_rows: f64 = rows.values().map(|&m| c2(m)).sum();
    let sum_cols: f64 = cols.values().map(|&m| c2(m)).sum();
    let expected = sum_rows * sum_cols / c2(n as u64);
    let max_index = (sum_rows + sum_cols) / 2.0;
    if max_index == expected {
        // Both labelings are all-singletons or all-one-cluster.
        return Ok(if index == max_index { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max_index - expected))
}

/// Validated, id-sorted input rows.
pub(crate) struct Prepared {
    pub ids: Vec<ProjectId>,
    pub points: Vec<Vec<f64>>,
}

pub(crate) fn prepare(
    vectors: &[AttributeVector],
    k: usize,
    max_iter: usize,
    tol: f64,
) -> Result<Prepared, ClusterError> {
    if k < 1 {
        return Err(ClusterError::InvalidK(k));
    }
    if k > vectors.len() {
        return Err(ClusterError::TooManyClusters { k, n: vectors.len() });
    }
    if max_iter < 1 {
        return Err(ClusterError::InvalidParameter("max_iter must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(ClusterError::InvalidParameter("tol must be positive".into()));
    }
    let dim = vectors[0].values.len();
    if dim == 0 {
        return Err(ClusterError::ShapeError("empty attribute vectors".into()));
    }
    let mut sorted: Vec<&AttributeVector> = vectors.iter().collect();
    sorted.sort_by(|a, b| a.project.cmp(&b.project));
    for w in sorted.windows(2) {
        if w[0].project == w[1].project {
            return Err(ClusterError::ShapeError(format!("duplicate project {}", w[0].project)));
        }
    }
    for v in &sorted {
        if v.values.len() != dim {
            return Err(ClusterError::ShapeError(format!(
                "{} has {} values, expected {dim}",
                v.project,
                v.values.len()
            )));
        }
        if v.values.iter().any(|x| !x.is_finite()) {
            return Err(ClusterError::ShapeError(format!("{} has non-finite values", v.project)));
        }
    }
    Ok(Prepared {
        ids: sorted.iter().map(|v| v.project.clone()).collect(),
        points: sorted.iter().map(|v| v.values.clone()).collect(),
    })
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    pub fn vector(name: &str, values: Vec<f64>) -> AttributeVector {
        AttributeVector {
            project: ProjectId::new(name).unwrap(),
            attribute_names: (0..values.len()).map(|i| format!("a{i}")).collect(),
            values,
        }
    }

    /// Three tight blobs with centers at least 0.4 apart, plus ground-truth labels.
    pub fn blobs(per_blob: usize, seed: u64) -> (Vec<AttributeVector>, Vec<usize>) {
        let centers = [[0.15, 0.2, 0.1], [0.8, 0.25, 0.6], [0.4, 0.85, 0.9]];
        let noise = Normal::new(0.0, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for i in 0..per_blob {
                let v = center.iter().map(|m| m + noise.sample(&mut rng)).collect();
                out.push(vector(&format!("0x{c}{i:03}"), v));
                labels.push(c);
            }
        }
        (out, labels)
    }

    pub fn labels_for(result: &ClusterResult, vectors: &[AttributeVector]) -> Vec<usize> {
        vectors.iter().map(|v| result.assignments[&v.project]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use proptest::prelude::*;

    fn assign(pairs: &[(&str, usize)]) -> BTreeMap<ProjectId, usize> {
        pairs.iter().map(|(p, g)| (ProjectId::new(p).unwrap(), *g)).collect()
    }

    #[test]
    fn order_by_size() {
        let a = assign(&[
            ("0xa", 0), ("0xb", 0), ("0xc", 0),
            ("0xd", 1), ("0xe", 1), ("0xf", 1), ("0xg", 1), ("0xh", 1),
            ("0xi", 2),
        ]);
        assert_eq!(order_groups(&a, 3), vec![1, 0, 2]);
    }

    #[test]
    fn singleton_ties_follow_member_ids() {
        let a = assign(&[("0xc", 0), ("0xa", 1), ("0xb", 2)]);
        assert_eq!(order_groups(&a, 3), vec![1, 2, 0]);
        let with_empty = assign(&[("0xc", 0), ("0xa", 2)]);
        assert_eq!(order_groups(&with_empty, 3), vec![2, 0, 1]);
    }

    #[test]
    fn order_matches_counting_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let k = rng.random_range(1..7);
            let a: BTreeMap<ProjectId, usize> = (0..30)
                .map(|i| (ProjectId::new(&format!("0x{i:02}")).unwrap(), rng.random_range(0..k)))
                .collect();
            let order = order_groups(&a, k);
            // counting oracle: bucket counts, then check the ranking rule pairwise
            let mut counts = vec![0usize; k];
            let mut min_member: Vec<Option<String>> = vec![None; k];
            for (p, &g) in &a {
                counts[g] += 1;
                let s = p.as_str().to_string();
                if min_member[g].as_ref().is_none_or(|m| s < *m) {
                    min_member[g] = Some(s);
                }
            }
            let mut sorted = order.clone();
            sorted.sort();
            assert_eq!(sorted, (0..k).collect::<Vec<_>>());
            for w in order.windows(2) {
                let (x, y) = (w[0], w[1]);
                assert!(counts[x] > counts[y]
                    || (counts[x] == counts[y]
                        && match (&min_member[x], &min_member[y]) {
                            (Some(a), Some(b)) => a < b,
                            (Some(_), None) => true,
                            (None, None) => x < y,
                            (None, Some(_)) => false,
                        }));
            }
        }
    }

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!(v < 0.0);
        // sklearn reference: adjusted_rand_score([0,0,0,1,1,1],[0,0,1,1,2,2]) = 0.24242424...
        let v = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]).unwrap();
        assert!((v - 0.242_424_242_424_242_4).abs() < 1e-12);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("kmeans".parse::<ClusterMethod>().unwrap(), ClusterMethod::KMeans);
        assert_eq!("GMM".parse::<ClusterMethod>().unwrap(), ClusterMethod::Gmm);
        assert!("dbscan".parse::<ClusterMethod>().is_err());
    }

    proptest! {
        #[test]
        fn input_order_does_not_matter(seed in 0u64..50, rot in 0usize..30) {
            let (vectors, _) = blobs(10, seed);
            let mut shuffled = vectors.clone();
            shuffled.rotate_left(rot);
            shuffled.reverse();
            for method in [ClusterMethod::KMeans, ClusterMethod::Gmm] {
                let params = ClusterParams { k: 3, seed, ..Default::default() };
                let a = cluster(method, &vectors, &params).unwrap();
                let b = cluster(method, &shuffled, &params).unwrap();
                prop_assert_eq!(a.canonical_assignments(), b.canonical_assignments());
            }
        }
    }
}
