//! The per-window pipeline: roles, popularity, mechanisms, substitution rate,
//! impact, then normalization across the window's alive projects.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::attributes::days_since_launch;
use super::{
    global_preferential_attachment, global_propensity, impact_dynamics,
    mutual_preferential_attachment, mutual_propensity, mutual_substitution_rate, recency,
    window_attributes, AttributeSelection, AttributeVector, HolderCounts, MechanismError,
    MechanismScores, PairMatrix,
};
use crate::dataset::Dataset;
use crate::ingest::{RoleFractions, WalletId};
use crate::model::{minmax_normalize, ProjectId, TimeWindow};

/// Everything computed for one window. Vectors and matrices are aligned with
/// `alive`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowAnalysis {
    pub window: TimeWindow,
    pub selection: AttributeSelection,
    pub alive: Vec<ProjectId>,
    /// Projects that are unlaunched or hold nothing during the window.
    pub inactive: Vec<ProjectId>,
    pub scores: Vec<MechanismScores>,
    pub attributes: Vec<AttributeVector>,
    pub holders: HolderCounts,
    /// `|S_i ∩ B_j|` over the window.
    pub migrated: PairMatrix,
    pub p_mutual: PairMatrix,
    pub lambda: PairMatrix,
    pub pi: PairMatrix,
    /// Role shares of the union buyer/seller/holder sets over the window.
    pub roles: Vec<RoleFractions>,
}

impl WindowAnalysis {
    pub fn index_of(&self, id: &ProjectId) -> Option<usize> {
        self.alive.iter().position(|p| p == id)
    }
}

struct WindowSets {
    sellers: HashSet<WalletId>,
    buyers: HashSet<WalletId>,
    holders: HashSet<WalletId>,
    cumulative: u32,
}

fn shared_count(a: &HashSet<WalletId>, b: &HashSet<WalletId>) -> usize {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().filter(|w| large.contains(w)).count()
}

/// Runs the full pipeline for one window. Deterministic for a fixed dataset,
/// window and selection.
pub fn compute_window_scores(
    dataset: &Dataset,
    window: &TimeWindow,
    selection: &AttributeSelection,
) -> Result<WindowAnalysis, MechanismError> {
    let span = dataset.span().ok_or(MechanismError::EmptyWindow(*window))?;
    if span.intersect(window).is_none() {
        return Err(MechanismError::EmptyWindow(*window));
    }

    let mut alive = Vec::new();
    let mut inactive = Vec::new();
    let mut sets = Vec::new();
    for project in dataset.projects() {
        let roles = dataset.roles().project(&project.id);
        let holders = roles.map(|r| r.holders_in(window)).unwrap_or_default();
        if project.launch_date > window.end || holders.is_empty() {
            inactive.push(project.id.clone());
            continue;
        }
        let roles = roles.expect("holders imply a role history");
        sets.push(WindowSets {
            sellers: roles.sellers_in(window),
            buyers: roles.buyers_in(window),
            cumulative: roles.owners_up_to(window.end),
            holders,
        });
        alive.push(project.id.clone());
    }
    let n = alive.len();
    if n < 2 {
        return Err(MechanismError::InsufficientProjects(n));
    }

    let holders = HolderCounts::new(
        alive.clone(),
        sets.iter().map(|s| s.holders.len() as u32).collect(),
        sets.iter().map(|s| s.cumulative).collect(),
    )?;

    let mut migrated = PairMatrix::zeros(alive.clone());
    let mut p_mutual = PairMatrix::zeros(alive.clone());
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let p = mutual_preferential_attachment(&alive[i], &sets[i].sellers, &sets[j].buyers, sets[i].cumulative)?;
            p_mutual.set(i, j, p);
            migrated.set(i, j, shared_count(&sets[i].sellers, &sets[j].buyers) as f64);
        }
    }

    let mut recency_raw = Vec::with_capacity(n);
    for id in &alive {
        let launch = dataset.project(id).expect("alive project exists").launch_date;
        let active = TimeWindow {
            start: window.start.max(launch),
            end: window.end,
        };
        let total: f64 = active
            .iter_days()
            .map(|d| dataset.normalized_popularity_on(id, d))
            .sum();
        let avg = total / active.days() as f64;
        recency_raw.push(recency(avg, days_since_launch(launch, window))?);
    }

    let global_pa_raw = global_preferential_attachment(&p_mutual, &holders)?;

    let attributes = window_attributes(dataset, &alive, window, selection)?;
    let mut lambda = PairMatrix::zeros(alive.clone());
    for i in 0..n {
        for j in (i + 1)..n {
            let l = mutual_propensity(&attributes[i].values, &attributes[j].values)?;
            lambda.set(i, j, l);
            lambda.set(j, i, l);
        }
    }
    let propensity_raw = alive
        .iter()
        .map(|id| global_propensity(&lambda, id))
        .collect::<Result<Vec<_>, _>>()?;

    let pi = mutual_substitution_rate(&lambda, &p_mutual, &recency_raw)?;
    let impact_raw = impact_dynamics(&pi, &holders)?;

    let recency_n = minmax_normalize(&recency_raw)?.values;
    let pa_n = minmax_normalize(&global_pa_raw)?.values;
    let prop_n = minmax_normalize(&propensity_raw)?.values;
    let impact_n = minmax_normalize(&impact_raw)?.values;

    let scores = (0..n)
        .map(|i| MechanismScores {
            project: alive[i].clone(),
            window: *window,
            recency_raw: recency_raw[i],
            recency: recency_n[i],
            global_pa_raw: global_pa_raw[i],
            global_pa: pa_n[i],
            propensity_raw: propensity_raw[i],
            propensity: prop_n[i],
            impact_raw: impact_raw[i],
            impact: impact_n[i],
        })
        .collect();

    let roles = sets
        .iter()
        .map(|s| {
            RoleFractions::from_sets(&s.buyers, &s.sellers, &s.holders)
                .unwrap_or(RoleFractions::CENTROID)
        })
        .collect();

    Ok(WindowAnalysis {
        window: *window,
        selection: selection.clone(),
        alive,
        inactive,
        scores,
        attributes,
        holders,
        migrated,
        p_mutual,
        lambda,
        pi,
        roles,
    })
}
