//! The three substitution mechanisms (recency, preferential attachment,
//! propensity), the mutual substitution rate and impact dynamics.

mod attributes;
mod pipeline;

use std::collections::HashSet;
use std::hash::Hash;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ProjectId, TimeWindow};

pub use attributes::{window_attributes, Attribute, AttributeSelection, AttributeVector};
pub use pipeline::{compute_window_scores, WindowAnalysis};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanismError {
    #[error("days since launch must be at least 1, got {0}")]
    InvalidDuration(f64),
    #[error("holder count of {0} is zero")]
    UndefinedDenominator(ProjectId),
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("no attributes selected")]
    NoAttributes,
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("attribute value {0} is negative or not finite")]
    InvalidAttributeValue(f64),
    #[error("need at least 2 projects, have {0}")]
    InsufficientProjects(usize),
    #[error("inputs are not aligned on the same project list")]
    AlignmentError,
    #[error("window {0} does not overlap the data")]
    EmptyWindow(TimeWindow),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Square project-pair matrix with an exactly zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMatrix {
    projects: Vec<ProjectId>,
    values: Vec<f64>,
}

impl PairMatrix {
    pub fn zeros(projects: Vec<ProjectId>) -> Self {
        let n = projects.len();
        Self {
            projects,
            values: vec![0.0; n * n],
        }
    }

    /// Builds from row-major values. The diagonal is forced to zero.
    pub fn from_rows(projects: Vec<ProjectId>, mut values: Vec<f64>) -> Result<Self, MechanismError> {
        let n = projects.len();
        if values.len() != n * n {
            return Err(MechanismError::ShapeError(format!(
                "{} values for {n} projects",
                values.len()
            )));
        }
        for i in 0..n {
            values[i * n + i] = 0.0;
        }
        Ok(Self { projects, values })
    }

    pub fn n(&self) -> usize {
        self.projects.len()
    }

    pub fn projects(&self) -> &[ProjectId] {
        &self.projects
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    /// Off-diagonal entries only; writes to the diagonal are ignored.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        if i != j {
            let n = self.n();
            self.values[i * n + j] = v;
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn index_of(&self, id: &ProjectId) -> Option<usize> {
        self.projects.iter().position(|p| p == id)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n(), self.n(), &self.values)
    }
}

/// Current (`H_i`, distinct holders within the window) and cumulative
/// (`H_i*`, distinct owners up to the window end) holder counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderCounts {
    pub projects: Vec<ProjectId>,
    pub current: Vec<u32>,
    pub cumulative: Vec<u32>,
}

impl HolderCounts {
    pub fn new(projects: Vec<ProjectId>, current: Vec<u32>, cumulative: Vec<u32>) -> Result<Self, MechanismError> {
        if current.len() != projects.len() || cumulative.len() != projects.len() {
            return Err(MechanismError::ShapeError("holder count lengths".into()));
        }
        if current.iter().zip(&cumulative).any(|(c, k)| k < c) {
            return Err(MechanismError::ShapeError("cumulative holders below current".into()));
        }
        Ok(Self {
            projects,
            current,
            cumulative,
        })
    }

    /// Same current count for every project (cumulative mirrors it).
    pub fn uniform(projects: Vec<ProjectId>, count: u32) -> Self {
        let n = projects.len();
        Self {
            projects,
            current: vec![count; n],
            cumulative: vec![count; n],
        }
    }
}

/// Per-project scores for one window. Unsuffixed fields are min-max
/// normalized across the window's alive projects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismScores {
    pub project: ProjectId,
    pub window: TimeWindow,
    pub recency_raw: f64,
    pub recency: f64,
    pub global_pa_raw: f64,
    pub global_pa: f64,
    pub propensity_raw: f64,
    pub propensity: f64,
    pub impact_raw: f64,
    pub impact: f64,
}

/// Mean popularity divided by days since launch.
pub fn recency(avg_popularity: f64, days_since_launch: f64) -> Result<f64, MechanismError> {
    if !(days_since_launch >= 1.0) {
        return Err(MechanismError::InvalidDuration(days_since_launch));
    }
    Ok(avg_popularity / days_since_launch)
}

/// Share of `i`'s cumulative owners that sold `i` and bought `j`.
pub fn mutual_preferential_attachment<T: Eq + Hash>(
    project_i: &ProjectId,
    sellers_i: &HashSet<T>,
    buyers_j: &HashSet<T>,
    cumulative_holders_i: u32,
) -> Result<f64, MechanismError> {
    if cumulative_holders_i == 0 {
        return Err(MechanismError::UndefinedDenominator(project_i.clone()));
    }
    let (small, large) = if sellers_i.len() <= buyers_j.len() {
        (sellers_i, buyers_j)
    } else {
        (buyers_j, sellers_i)
    };
    let shared = small.iter().filter(|w| large.contains(w)).count();
    Ok(shared as f64 / cumulative_holders_i as f64)
}

fn check_aligned(projects: &[ProjectId], holders: &HolderCounts) -> Result<(), MechanismError> {
    if projects != holders.projects.as_slice() {
        return Err(MechanismError::AlignmentError);
    }
    Ok(())
}

/// Net expected inflow of stakeholders relative to current holders:
/// `sum_k P[k->i] H_k / H_i - sum_j P[i->j]`.
pub fn global_preferential_attachment(
    p: &PairMatrix,
    holders: &HolderCounts,
) -> Result<Vec<f64>, MechanismError> {
    check_aligned(p.projects(), holders)?;
    if let Some(i) = holders.current.iter().position(|&h| h == 0) {
        return Err(MechanismError::UndefinedDenominator(holders.projects[i].clone()));
    }
    let m = p.to_dmatrix();
    let h = DVector::from_iterator(p.n(), holders.current.iter().map(|&c| c as f64));
    let inflow = m.tr_mul(&h);
    let outflow = m.column_sum();
    Ok((0..p.n()).map(|i| inflow[i] / h[i] - outflow[i]).collect())
}

/// Cosine similarity of two non-negative attribute vectors; 0 if either is all zero.
pub fn mutual_propensity(attr_i: &[f64], attr_j: &[f64]) -> Result<f64, MechanismError> {
    if attr_i.is_empty() && attr_j.is_empty() {
        return Err(MechanismError::NoAttributes);
    }
    if attr_i.len() != attr_j.len() {
        return Err(MechanismError::ShapeError(format!(
            "attribute vectors of length {} and {}",
            attr_i.len(),
            attr_j.len()
        )));
    }
    if let Some(&bad) = attr_i.iter().chain(attr_j).find(|v| !v.is_finite() || **v < 0.0) {
        return Err(MechanismError::InvalidAttributeValue(bad));
    }
    let dot: f64 = attr_i.iter().zip(attr_j).map(|(a, b)| a * b).sum();
    let na = attr_i.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = attr_j.iter().map(|b| b * b).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}

/// Mean propensity of project `i` to every other project.
pub fn global_propensity(lambda: &PairMatrix, i: &ProjectId) -> Result<f64, MechanismError> {
    let n = lambda.n();
    if n < 2 {
        return Err(MechanismError::InsufficientProjects(n));
    }
    let idx = lambda.index_of(i).ok_or(MechanismError::AlignmentError)?;
    Ok(lambda.row(idx).iter().sum::<f64>() / (n - 1) as f64)
}

/// `Pi[i->j] = lambda[i][j] * P[i->j] * R_i`, with the source project's recency.
pub fn mutual_substitution_rate(
    lambda: &PairMatrix,
    p: &PairMatrix,
    recency: &[f64],
) -> Result<PairMatrix, MechanismError> {
    if lambda.projects() != p.projects() || recency.len() != p.n() {
        return Err(MechanismError::AlignmentError);
    }
    let n = p.n();
    let values = (0..n * n)
        .map(|k| lambda.values[k] * p.values[k] * recency[k / n])
        .collect();
    PairMatrix::from_rows(p.projects.clone(), values)
}

/// `M_i = sum_k Pi[k->i] H_k - sum_j Pi[i->j] H_j`.
pub fn impact_dynamics(pi: &PairMatrix, holders: &HolderCounts) -> Result<Vec<f64>, MechanismError> {
    check_aligned(pi.projects(), holders)?;
    let m = pi.to_dmatrix();
    let h = DVector::from_iterator(pi.n(), holders.current.iter().map(|&c| c as f64));
    let impact = m.tr_mul(&h) - &m * &h;
    Ok(impact.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(n: usize) -> Vec<ProjectId> {
        (0..n).map(|i| ProjectId::new(&format!("0xp{i}")).unwrap()).collect()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> PairMatrix {
        let vals = (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect();
        PairMatrix::from_rows(ids(n), vals).unwrap()
    }

    fn naive_pa(p: &PairMatrix, h: &[u32]) -> Vec<f64> {
        let n = p.n();
        (0..n)
            .map(|i| {
                let mut inflow = 0.0;
                let mut outflow = 0.0;
                for k in 0..n {
                    if k != i {
                        inflow += p.get(k, i) * h[k] as f64 / h[i] as f64;
                        outflow += p.get(i, k);
                    }
                }
                inflow - outflow
            })
            .collect()
    }

    fn naive_impact(pi: &PairMatrix, h: &[u32]) -> Vec<f64> {
        let n = pi.n();
        (0..n)
            .map(|i| {
                let mut m = 0.0;
                for k in 0..n {
                    m += pi.get(k, i) * h[k] as f64;
                    m -= pi.get(i, k) * h[k] as f64;
                }
                m
            })
            .collect()
    }

    #[test]
    fn recency_examples() {
        assert!((recency(0.5, 10.0).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(recency(1.0, 1.0).unwrap(), 1.0);
        assert!(matches!(recency(1.0, 0.5), Err(MechanismError::InvalidDuration(_))));
        let r: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|d| recency(0.4, *d).unwrap()).collect();
        let n = crate::model::minmax_normalize(&r).unwrap().values;
        assert!(n[0] > n[1] && n[1] > n[2]);
    }

    #[test]
    fn mutual_pa_examples() {
        let p = ProjectId::new("0xi").unwrap();
        let sellers: HashSet<u32> = (0..5).collect();
        let buyers: HashSet<u32> = (0..5).chain(100..120).collect();
        assert!((mutual_preferential_attachment(&p, &sellers, &buyers, 100).unwrap() - 0.05).abs() < 1e-15);
        let disjoint: HashSet<u32> = (50..60).collect();
        assert_eq!(mutual_preferential_attachment(&p, &sellers, &disjoint, 10).unwrap(), 0.0);
        assert!(matches!(
            mutual_preferential_attachment(&p, &sellers, &buyers, 0),
            Err(MechanismError::UndefinedDenominator(_))
        ));
    }

    #[test]
    fn global_pa_examples() {
        let mut p = PairMatrix::zeros(ids(2));
        p.set(0, 1, 0.1);
        p.set(1, 0, 0.1);
        let pa = global_preferential_attachment(&p, &HolderCounts::uniform(ids(2), 100)).unwrap();
        assert!(pa.iter().all(|v| v.abs() < 1e-15));

        let mut p = PairMatrix::zeros(ids(2));
        p.set(1, 0, 0.2);
        let h = HolderCounts::new(ids(2), vec![100, 200], vec![100, 200]).unwrap();
        let pa = global_preferential_attachment(&p, &h).unwrap();
        assert!((pa[0] - 0.4).abs() < 1e-15);
        assert!((pa[1] + 0.2).abs() < 1e-15);

        let h0 = HolderCounts::new(ids(2), vec![0, 5], vec![3, 5]).unwrap();
        assert!(matches!(
            global_preferential_attachment(&p, &h0),
            Err(MechanismError::UndefinedDenominator(_))
        ));
    }

    #[test]
    fn global_pa_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_matrix(&mut rng, 5);
        let h: Vec<u32> = (0..5).map(|_| rng.random_range(1..500)).collect();
        let counts = HolderCounts::new(ids(5), h.clone(), h.clone()).unwrap();
        let got = global_preferential_attachment(&p, &counts).unwrap();
        for (a, b) in got.iter().zip(naive_pa(&p, &h)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn propensity_examples() {
        assert!((mutual_propensity(&[0.3, 0.7], &[0.3, 0.7]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(mutual_propensity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((mutual_propensity(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(mutual_propensity(&[0.0, 0.0], &[0.5, 1.0]).unwrap(), 0.0);
        assert!(matches!(mutual_propensity(&[1.0], &[1.0, 2.0]), Err(MechanismError::ShapeError(_))));
        assert_eq!(mutual_propensity(&[], &[]), Err(MechanismError::NoAttributes));
    }

    #[test]
    fn global_propensity_examples() {
        let n = 4;
        let mut l = PairMatrix::from_rows(ids(n), vec![0.5; n * n]).unwrap();
        for id in ids(n) {
            assert!((global_propensity(&l, &id).unwrap() - 0.5).abs() < 1e-15);
        }
        for j in 0..n {
            for k in 0..n {
                l.set(j, k, 0.0);
            }
        }
        l.set(0, 1, 1.0);
        assert!((global_propensity(&l, &ids(n)[0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let single = PairMatrix::zeros(ids(1));
        assert_eq!(
            global_propensity(&single, &ids(1)[0]),
            Err(MechanismError::InsufficientProjects(1))
        );

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = random_matrix(&mut rng, 6);
        for (i, id) in ids(6).iter().enumerate() {
            let oracle = (0..6).filter(|&j| j != i).map(|j| r.get(i, j)).sum::<f64>() / 5.0;
            assert!((global_propensity(&r, id).unwrap() - oracle).abs() < 1e-15);
        }
    }

    #[test]
    fn substitution_rate_examples() {
        let l = PairMatrix::from_rows(ids(2), vec![0.0, 0.5, 0.5, 0.0]).unwrap();
        let p = PairMatrix::from_rows(ids(2), vec![0.0, 0.1, 0.0, 0.0]).unwrap();
        let pi = mutual_substitution_rate(&l, &p, &[0.2, 0.9]).unwrap();
        assert!((pi.get(0, 1) - 0.01).abs() < 1e-15);
        assert_eq!(pi.get(1, 0), 0.0);
        assert!(matches!(
            mutual_substitution_rate(&l, &p, &[0.2]),
            Err(MechanismError::AlignmentError)
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (l, p) = (random_matrix(&mut rng, 4), random_matrix(&mut rng, 4));
        let r: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
        let pi = mutual_substitution_rate(&l, &p, &r).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 0.0 } else { l.get(i, j) * p.get(i, j) * r[i] };
                assert!((pi.get(i, j) - want).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn impact_examples() {
        let mut pi = PairMatrix::zeros(ids(2));
        pi.set(1, 0, 0.01);
        pi.set(0, 1, 0.02);
        let m = impact_dynamics(&pi, &HolderCounts::uniform(ids(2), 100)).unwrap();
        assert!((m[0] + 1.0).abs() < 1e-12);
        assert!((m[1] - 1.0).abs() < 1e-12);

        let sym = PairMatrix::from_rows(ids(3), vec![0.3; 9]).unwrap();
        let m = impact_dynamics(&sym, &HolderCounts::uniform(ids(3), 40)).unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-12));

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pi = random_matrix(&mut rng, 6);
        let h: Vec<u32> = (0..6).map(|_| rng.random_range(1..1000)).collect();
        let counts = HolderCounts::new(ids(6), h.clone(), h.clone()).unwrap();
        let got = impact_dynamics(&pi, &counts).unwrap();
        for (a, b) in got.iter().zip(naive_impact(&pi, &h)) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn misaligned_holders_rejected() {
        let pi = PairMatrix::zeros(ids(2));
        let h = HolderCounts::uniform(ids(3), 1);
        assert_eq!(impact_dynamics(&pi, &h), Err(MechanismError::AlignmentError));
    }

    proptest! {
        #[test]
        fn impact_conserves_with_equal_holders(seed in any::<u64>(), n in 2usize..9, h in 1u32..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pi = random_matrix(&mut rng, n);
            let m = impact_dynamics(&pi, &HolderCounts::uniform(ids(n), h)).unwrap();
            prop_assert!(m.iter().sum::<f64>().abs() < 1e-9);
        }

        #[test]
        fn propensity_is_symmetric_and_scale_invariant(
            a in prop::collection::vec(0.0f64..1.0, 3),
            b in prop::collection::vec(0.0f64..1.0, 3),
            c in 0.01f64..100.0,
        ) {
            let ab = mutual_propensity(&a, &b).unwrap();
            prop_assert_eq!(ab, mutual_propensity(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            let scaled: Vec<f64> = a.iter().map(|v| v * c).collect();
            prop_assert!((mutual_propensity(&scaled, &b).unwrap() - ab).abs() < 1e-12);
        }

        #[test]
        fn more_migrants_never_lowers_rate(extra in 1u32..20, base in 0u32..20, hstar in 40u32..100) {
            let p = ProjectId::new("0xi").unwrap();
            let sellers: HashSet<u32> = (0..base + extra).collect();
            let few: HashSet<u32> = (0..base).collect();
            let many: HashSet<u32> = (0..base + extra).collect();
            let lo = mutual_preferential_attachment(&p, &sellers, &few, hstar).unwrap();
            let hi = mutual_preferential_attachment(&p, &sellers, &many, hstar).unwrap();
            prop_assert!(hi >= lo);
        }
    }
}
