//! The substitution graph for one window: projects placed by their role mix
//! inside an equilateral triangle, joined by directed migration edges.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::ClusterResult;
use crate::ingest::RoleFractions;
use crate::mechanisms::WindowAnalysis;
use crate::model::{ProjectId, TimeWindow};

pub const DEFAULT_SIDE: f64 = 1.0;
const SUM_TOLERANCE: f64 = 1e-6;
const MIN_RADIUS: f64 = 0.008;
const MAX_RADIUS: f64 = 0.04;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("barycentric weights ({b}, {s}, {h}) must be non-negative and sum to 1")]
    InvalidBarycentric { b: f64, s: f64, h: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("inputs disagree: {0}")]
    StaleInput(String),
    #[error("not found: {0}")]
    NotFound(String),
}

/// Maps role shares to the triangle with vertices B=(0,0), S=(side,0) and
/// H=(side/2, side·√3/2).
pub fn barycentric_project(b: f64, s: f64, h: f64, side: f64) -> Result<(f64, f64), FlowError> {
    if !(side > 0.0 && side.is_finite()) {
        return Err(FlowError::InvalidParameter(format!("side length {side}")));
    }
    let finite = b.is_finite() && s.is_finite() && h.is_finite();
    if !finite || b < 0.0 || s < 0.0 || h < 0.0 || (b + s + h - 1.0).abs() > SUM_TOLERANCE {
        return Err(FlowError::InvalidBarycentric { b, s, h });
    }
    let x = s * side + h * (side / 2.0);
    let y = h * (side * 3f64.sqrt() / 2.0);
    Ok((x, y))
}

/// Normalized mechanism scores shown around a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeMechanisms {
    pub recency: f64,
    pub preferential_attachment: f64,
    pub propensity: f64,
    pub impact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub project: ProjectId,
    /// `None` for projects inactive in the window.
    pub group: Option<usize>,
    pub b: f64,
    pub s: f64,
    pub h: f64,
    pub x: f64,
    pub y: f64,
    pub holders: u32,
    pub alive: bool,
    pub radius: f64,
    pub mechanisms: Option<NodeMechanisms>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEdge {
    pub source: ProjectId,
    pub target: ProjectId,
    /// Wallets that sold the source and bought the target in the window.
    pub migrated: u64,
    pub p: f64,
    pub pi: f64,
    /// `pi` scaled by the source's holder count.
    pub pi_h: f64,
}

/// A contiguous span of the outer ring, as fractions of a full turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupArc {
    /// `None` marks the arc of inactive projects.
    pub group: Option<usize>,
    pub start: f64,
    pub end: f64,
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionGraph {
    pub window: TimeWindow,
    pub k: usize,
    pub side_length: f64,
    pub edge_threshold: f64,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<FlowEdge>,
    /// Node projects by holder count, largest first, ties by id.
    pub ring: Vec<ProjectId>,
    pub group_arcs: Vec<GroupArc>,
}

impl SubstitutionGraph {
    pub fn node(&self, project: &ProjectId) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| &n.project == project)
    }

    /// Groups that appear on the ring, in arc order.
    pub fn groups(&self) -> Vec<usize> {
        self.group_arcs.iter().filter_map(|a| a.group).collect()
    }
}

fn radius(holders: u32, max_holders: u32) -> f64 {
    if max_holders == 0 {
        return MIN_RADIUS;
    }
    MIN_RADIUS + (MAX_RADIUS - MIN_RADIUS) * (holders as f64 / max_holders as f64).sqrt()
}

fn ring_order(nodes: &[GraphNode]) -> Vec<ProjectId> {
    let mut ranked: Vec<&GraphNode> = nodes.iter().collect();
    ranked.sort_by(|a, b| b.holders.cmp(&a.holders).then_with(|| a.project.cmp(&b.project)));
    ranked.into_iter().map(|n| n.project.clone()).collect()
}

/// Arcs follow `group_order`, skipping groups without nodes; inactive
/// projects close the ring.
fn arcs(nodes: &[GraphNode], group_order: &[usize]) -> Vec<GroupArc> {
    let total = nodes.len();
    if total == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut cursor = 0usize;
    let mut push = |group: Option<usize>, members: usize, out: &mut Vec<GroupArc>| {
        if members == 0 {
            return;
        }
        let start = cursor as f64 / total as f64;
        cursor += members;
        out.push(GroupArc {
            group,
            start,
            end: cursor as f64 / total as f64,
            members,
        });
    };
    for &g in group_order {
        let members = nodes.iter().filter(|n| n.alive && n.group == Some(g)).count();
        push(Some(g), members, &mut out);
    }
    let inactive = nodes.iter().filter(|n| !n.alive).count();
    push(None, inactive, &mut out);
    out
}

fn current_group_order(graph: &SubstitutionGraph) -> Vec<usize> {
    graph.group_arcs.iter().filter_map(|a| a.group).collect()
}

fn assemble(
    template: &SubstitutionGraph,
    nodes: Vec<GraphNode>,
    edges: Vec<FlowEdge>,
    group_order: &[usize],
) -> SubstitutionGraph {
    SubstitutionGraph {
        window: template.window,
        k: template.k,
        side_length: template.side_length,
        edge_threshold: template.edge_threshold,
        ring: ring_order(&nodes),
        group_arcs: arcs(&nodes, group_order),
        nodes,
        edges,
    }
}

/// Builds the window graph. Edges are kept when more than `edge_threshold`
/// wallets migrated along them.
pub fn build_graph(
    analysis: &WindowAnalysis,
    clusters: &ClusterResult,
    edge_threshold: f64,
    side: f64,
) -> Result<SubstitutionGraph, FlowError> {
    if !(edge_threshold >= 0.0) {
        return Err(FlowError::InvalidParameter(format!("edge threshold {edge_threshold}")));
    }
    barycentric_project(1.0, 0.0, 0.0, side)?;

    let alive: BTreeSet<&ProjectId> = analysis.alive.iter().collect();
    let clustered: BTreeSet<&ProjectId> = clusters.assignments.keys().collect();
    if alive != clustered {
        return Err(FlowError::StaleInput(format!(
            "{} alive projects but {} clustered",
            alive.len(),
            clustered.len()
        )));
    }
    let n = analysis.alive.len();
    if analysis.roles.len() != n || analysis.scores.len() != n || analysis.holders.current.len() != n {
        return Err(FlowError::StaleInput("analysis sections have different lengths".into()));
    }
    if analysis.scores.iter().any(|s| s.window != analysis.window) {
        return Err(FlowError::StaleInput("scores from another window".into()));
    }

    let max_holders = analysis.holders.current.iter().copied().max().unwrap_or(0);
    let mut nodes = Vec::with_capacity(n + analysis.inactive.len());
    for (i, project) in analysis.alive.iter().enumerate() {
        let RoleFractions { b, s, h } = analysis.roles[i];
        let (x, y) = barycentric_project(b, s, h, side)?;
        let score = &analysis.scores[i];
        nodes.push(GraphNode {
            project: project.clone(),
            group: clusters.group_of(project),
            b,
            s,
            h,
            x,
            y,
            holders: analysis.holders.current[i],
            alive: true,
            radius: radius(analysis.holders.current[i], max_holders),
            mechanisms: Some(NodeMechanisms {
                recency: score.recency,
                preferential_attachment: score.global_pa,
                propensity: score.propensity,
                impact: score.impact,
            }),
        });
    }
    let c = RoleFractions::CENTROID;
    let (cx, cy) = barycentric_project(c.b, c.s, c.h, side)?;
    for project in &analysis.inactive {
        nodes.push(GraphNode {
            project: project.clone(),
            group: None,
            b: c.b,
            s: c.s,
            h: c.h,
            x: cx,
            y: cy,
            holders: 0,
            alive: false,
            radius: MIN_RADIUS,
            mechanisms: None,
        });
    }

    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let migrated = analysis.migrated.get(i, j);
            if i == j || !(migrated > edge_threshold) {
                continue;
            }
            let pi = analysis.pi.get(i, j);
            edges.push(FlowEdge {
                source: analysis.alive[i].clone(),
                target: analysis.alive[j].clone(),
                migrated: migrated as u64,
                p: analysis.p_mutual.get(i, j),
                pi,
                pi_h: pi * analysis.holders.current[i] as f64,
            });
        }
    }

    Ok(SubstitutionGraph {
        window: analysis.window,
        k: clusters.k,
        side_length: side,
        edge_threshold,
        ring: ring_order(&nodes),
        group_arcs: arcs(&nodes, &clusters.group_order),
        nodes,
        edges,
    })
}

/// The selected group's nodes and the edges between them.
pub fn group_filter(graph: &SubstitutionGraph, group: usize) -> Result<SubstitutionGraph, FlowError> {
    if !graph.group_arcs.iter().any(|a| a.group == Some(group)) {
        return Err(FlowError::NotFound(format!("group {group}")));
    }
    let nodes: Vec<GraphNode> = graph
        .nodes
        .iter()
        .filter(|n| n.alive && n.group == Some(group))
        .cloned()
        .collect();
    let members: HashSet<&ProjectId> = nodes.iter().map(|n| &n.project).collect();
    let edges = graph
        .edges
        .iter()
        .filter(|e| members.contains(&e.source) && members.contains(&e.target))
        .cloned()
        .collect();
    Ok(assemble(graph, nodes, edges, &[group]))
}

/// The project, its direct neighbors in either direction, and only the
/// edges touching the project.
pub fn ego_network(graph: &SubstitutionGraph, project: &ProjectId) -> Result<SubstitutionGraph, FlowError> {
    if graph.node(project).is_none() {
        return Err(FlowError::NotFound(format!("project {project}")));
    }
    let edges: Vec<FlowEdge> = graph
        .edges
        .iter()
        .filter(|e| &e.source == project || &e.target == project)
        .cloned()
        .collect();
    let mut keep: HashSet<&ProjectId> = edges.iter().flat_map(|e| [&e.source, &e.target]).collect();
    keep.insert(project);
    let nodes = graph
        .nodes
        .iter()
        .filter(|n| keep.contains(&n.project))
        .cloned()
        .collect();
    Ok(assemble(graph, nodes, edges, &current_group_order(graph)))
}
