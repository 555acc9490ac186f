//! Request and response payloads, and the computations behind each route.

use std::collections::{BTreeMap, HashSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use substrace::clustering::{cluster, ClusterMethod, ClusterParams, ClusterResult, MAX_USER_K};
use substrace::dataset::Dataset;
use substrace::flowgraph::{build_graph, SubstitutionGraph, DEFAULT_SIDE};
use substrace::ingest::WalletId;
use substrace::mechanisms::{compute_window_scores, AttributeSelection, MechanismScores};
use substrace::model::{ProjectId, TimeWindow};
use substrace::stats::pearson_correlation;

use crate::error::ApiError;

pub const MIN_USER_K: usize = 2;
pub const HISTOGRAM_BINS: usize = 10;

/// A window given either as `"YYYY-MM-DD:YYYY-MM-DD"` or as `{start, end}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WindowSpec {
    Text(String),
    Range(TimeWindow),
}

impl WindowSpec {
    pub fn resolve(&self) -> Result<TimeWindow, ApiError> {
        match self {
            WindowSpec::Text(s) => Ok(s.parse()?),
            WindowSpec::Range(w) => Ok(TimeWindow::new(w.start, w.end)?),
        }
    }
}

fn default_method() -> String {
    "kmeans".into()
}

fn default_k() -> usize {
    6
}

/// The body of `POST /api/analysis`. Omitted fields take defaults: the full
/// data span, every attribute, K-means with k = 6, seed 0 and threshold 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisRequest {
    #[serde(default)]
    pub window: Option<WindowSpec>,
    #[serde(default)]
    pub attributes: Option<Vec<String>>,
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub edge_threshold: f64,
}

impl Default for AnalysisRequest {
    fn default() -> Self {
        Self {
            window: None,
            attributes: None,
            method: default_method(),
            k: default_k(),
            seed: 0,
            edge_threshold: 0.0,
        }
    }
}

/// A checked request. Its JSON form is the cache key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidRequest {
    pub window: Option<TimeWindow>,
    pub attributes: AttributeSelection,
    pub method: ClusterMethod,
    pub k: usize,
    pub seed: u64,
    pub edge_threshold: f64,
}

impl AnalysisRequest {
    /// Checks everything that does not need the data. `k` is checked first.
    pub fn validate(&self) -> Result<ValidRequest, ApiError> {
        if !(MIN_USER_K..=MAX_USER_K).contains(&self.k) {
            return Err(ApiError::InvalidK(self.k));
        }
        let method: ClusterMethod = self
            .method
            .parse()
            .map_err(|_| ApiError::BadRequest(format!("unknown method {:?}", self.method)))?;
        let attributes = match &self.attributes {
            None => AttributeSelection::all(),
            Some(names) => {
                let attrs = names.iter().map(|n| n.parse()).collect::<Result<Vec<_>, _>>()?;
                AttributeSelection::new(attrs)?
            }
        };
        let window = self.window.as_ref().map(WindowSpec::resolve).transpose()?;
        if !(self.edge_threshold >= 0.0 && self.edge_threshold.is_finite()) {
            return Err(ApiError::BadRequest(format!("edge threshold {}", self.edge_threshold)));
        }
        Ok(ValidRequest {
            window,
            attributes,
            method,
            k: self.k,
            seed: self.seed,
            edge_threshold: self.edge_threshold,
        })
    }
}

impl ValidRequest {
    pub fn digest(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        Sha256::digest(&bytes).into()
    }

    /// Fills in the full data span when no window was given.
    pub fn resolved(&self, dataset: &Dataset) -> Result<ValidRequest, ApiError> {
        let window = resolve_window(dataset, self.window)?;
        Ok(ValidRequest {
            window: Some(window),
            ..self.clone()
        })
    }
}

fn resolve_window(dataset: &Dataset, window: Option<TimeWindow>) -> Result<TimeWindow, ApiError> {
    let span = dataset
        .span()
        .ok_or_else(|| ApiError::EmptyWindow("the dataset has no days".into()))?;
    let window = window.unwrap_or(span);
    if span.intersect(&window).is_none() {
        return Err(ApiError::EmptyWindow(format!("window {window} does not overlap the data span {span}")));
    }
    Ok(window)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub method: ClusterMethod,
    pub k: usize,
    pub seed: u64,
    pub assignments: BTreeMap<ProjectId, usize>,
    pub group_order: Vec<usize>,
    pub group_sizes: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations_run: usize,
    pub converged: bool,
    /// Final WCSS (K-means) or log-likelihood (GMM).
    pub objective: Option<f64>,
}

impl From<&ClusterResult> for ClusterSummary {
    fn from(c: &ClusterResult) -> Self {
        Self {
            method: c.method,
            k: c.k,
            seed: c.seed,
            assignments: c.assignments.clone(),
            group_order: c.group_order.clone(),
            group_sizes: c.group_sizes(),
            centroids: c.centroids.clone(),
            iterations_run: c.iterations_run,
            converged: c.converged,
            objective: c.trace.last().copied(),
        }
    }
}

/// Equal-width bins over `[0, 1]`; 1.0 falls in the last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u32>,
}

impl Histogram {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut counts = vec![0u32; HISTOGRAM_BINS];
        for v in values {
            let bin = ((v.clamp(0.0, 1.0) * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
            counts[bin] += 1;
        }
        Self { lo: 0.0, hi: 1.0, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histograms {
    pub recency: Histogram,
    pub preferential_attachment: Histogram,
    pub propensity: Histogram,
    pub impact: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcpRecord {
    pub project: ProjectId,
    pub recency: f64,
    pub preferential_attachment: f64,
    pub propensity: f64,
    pub impact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcpGroup {
    pub group: usize,
    pub projects: Vec<PcpRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResponse {
    pub request: ValidRequest,
    pub window: TimeWindow,
    pub alive: Vec<ProjectId>,
    pub inactive: Vec<ProjectId>,
    pub scores: Vec<MechanismScores>,
    pub clusters: ClusterSummary,
    pub graph: SubstitutionGraph,
    pub histograms: Histograms,
    pub pcp: Vec<PcpGroup>,
}

/// Mechanisms, then clustering, then the graph.
pub fn run_analysis(dataset: &Dataset, request: &ValidRequest) -> Result<AnalysisResponse, ApiError> {
    let request = request.resolved(dataset)?;
    let window = request.window.expect("resolved");
    let analysis = compute_window_scores(dataset, &window, &request.attributes)?;
    let params = ClusterParams {
        k: request.k,
        seed: request.seed,
        ..ClusterParams::default()
    };
    let clusters = cluster(request.method, &analysis.attributes, &params)?;
    let graph = build_graph(&analysis, &clusters, request.edge_threshold, DEFAULT_SIDE)?;

    let scores = &analysis.scores;
    let histograms = Histograms {
        recency: Histogram::of(scores.iter().map(|s| s.recency)),
        preferential_attachment: Histogram::of(scores.iter().map(|s| s.global_pa)),
        propensity: Histogram::of(scores.iter().map(|s| s.propensity)),
        impact: Histogram::of(scores.iter().map(|s| s.impact)),
    };
    let pcp = clusters
        .group_order
        .iter()
        .map(|&g| PcpGroup {
            group: g,
            projects: scores
                .iter()
                .filter(|s| clusters.group_of(&s.project) == Some(g))
                .map(|s| PcpRecord {
                    project: s.project.clone(),
                    recency: s.recency,
                    preferential_attachment: s.global_pa,
                    propensity: s.propensity,
                    impact: s.impact,
                })
                .collect(),
        })
        .filter(|g| !g.projects.is_empty())
        .collect();

    Ok(AnalysisResponse {
        window,
        alive: analysis.alive.clone(),
        inactive: analysis.inactive.clone(),
        scores: analysis.scores.clone(),
        clusters: ClusterSummary::from(&clusters),
        graph,
        histograms,
        pcp,
        request,
    })
}

/// One row of `projects.csv` plus whether the project is alive over the span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectRecord {
    pub contract: ProjectId,
    pub name: String,
    pub hashtag: String,
    pub launch_date: NaiveDate,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectsResponse {
    pub span: Option<TimeWindow>,
    pub projects: Vec<ProjectRecord>,
}

pub fn project_list(dataset: &Dataset) -> ProjectsResponse {
    let span = dataset.span();
    let projects = dataset
        .projects()
        .iter()
        .map(|p| ProjectRecord {
            contract: p.id.clone(),
            name: p.name.clone(),
            hashtag: p.twitter_hashtag.clone(),
            launch_date: p.launch_date,
            alive: span.is_some_and(|w| is_alive(dataset, &p.id, &w)),
        })
        .collect();
    ProjectsResponse { span, projects }
}

/// Launched by the window's end and holding something during it.
pub fn is_alive(dataset: &Dataset, project: &ProjectId, window: &TimeWindow) -> bool {
    let launched = dataset.project(project).is_some_and(|p| p.launch_date <= window.end);
    launched
        && dataset
            .roles()
            .project(project)
            .is_some_and(|r| !r.holders_in(window).is_empty())
}

fn require_alive(dataset: &Dataset, project: &ProjectId, window: &TimeWindow) -> Result<(), ApiError> {
    if dataset.project(project).is_none() {
        return Err(ApiError::NotFound(format!("unknown project {project}")));
    }
    if !is_alive(dataset, project, window) {
        return Err(ApiError::NotAlive(format!("{project} is not alive in {window}")));
    }
    Ok(())
}

pub fn parse_project(raw: &str) -> Result<ProjectId, ApiError> {
    ProjectId::new(raw).map_err(|e| ApiError::BadRequest(e.to_string()))
}

/// Daily role counts and single-day mechanism scores for one project. Every
/// array has one entry per window day; mechanism entries are `null` on days
/// the pipeline cannot score the project.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSeries {
    pub project: ProjectId,
    pub window: TimeWindow,
    pub dates: Vec<NaiveDate>,
    pub buyers: Vec<u32>,
    pub sellers: Vec<u32>,
    pub holders: Vec<u32>,
    pub recency_raw: Vec<Option<f64>>,
    pub recency: Vec<Option<f64>>,
    pub preferential_attachment_raw: Vec<Option<f64>>,
    pub preferential_attachment: Vec<Option<f64>>,
    pub propensity_raw: Vec<Option<f64>>,
    pub propensity: Vec<Option<f64>>,
    pub impact_raw: Vec<Option<f64>>,
    pub impact: Vec<Option<f64>>,
}

impl EvolutionSeries {
    fn empty(project: ProjectId, window: TimeWindow) -> Self {
        let n = window.days() as usize;
        Self {
            project,
            window,
            dates: Vec::with_capacity(n),
            buyers: Vec::with_capacity(n),
            sellers: Vec::with_capacity(n),
            holders: Vec::with_capacity(n),
            recency_raw: Vec::with_capacity(n),
            recency: Vec::with_capacity(n),
            preferential_attachment_raw: Vec::with_capacity(n),
            preferential_attachment: Vec::with_capacity(n),
            propensity_raw: Vec::with_capacity(n),
            propensity: Vec::with_capacity(n),
            impact_raw: Vec::with_capacity(n),
            impact: Vec::with_capacity(n),
        }
    }

    fn push_scores(&mut self, s: Option<&MechanismScores>) {
        self.recency_raw.push(s.map(|s| s.recency_raw));
        self.recency.push(s.map(|s| s.recency));
        self.preferential_attachment_raw.push(s.map(|s| s.global_pa_raw));
        self.preferential_attachment.push(s.map(|s| s.global_pa));
        self.propensity_raw.push(s.map(|s| s.propensity_raw));
        self.propensity.push(s.map(|s| s.propensity));
        self.impact_raw.push(s.map(|s| s.impact_raw));
        self.impact.push(s.map(|s| s.impact));
    }
}

fn evolution_many(
    dataset: &Dataset,
    projects: &[ProjectId],
    window: TimeWindow,
    selection: &AttributeSelection,
) -> Vec<EvolutionSeries> {
    let mut out: Vec<EvolutionSeries> = projects.iter().map(|p| EvolutionSeries::empty(p.clone(), window)).collect();
    for day in window.iter_days() {
        let analysis = compute_window_scores(dataset, &TimeWindow::single(day), selection).ok();
        for series in &mut out {
            let roles = dataset.roles().project(&series.project);
            series.dates.push(day);
            series.buyers.push(roles.map_or(0, |r| r.buyers_on(day).len() as u32));
            series.sellers.push(roles.map_or(0, |r| r.sellers_on(day).len() as u32));
            series.holders.push(roles.map_or(0, |r| r.holder_count(day)));
            let scores = analysis
                .as_ref()
                .and_then(|a| a.index_of(&series.project).map(|i| &a.scores[i]));
            series.push_scores(scores);
        }
    }
    out
}

pub fn evolution(
    dataset: &Dataset,
    project: &ProjectId,
    window: Option<TimeWindow>,
    selection: &AttributeSelection,
) -> Result<EvolutionSeries, ApiError> {
    let window = resolve_window(dataset, window)?;
    require_alive(dataset, project, &window)?;
    Ok(evolution_many(dataset, std::slice::from_ref(project), window, selection).remove(0))
}

/// Wallets in a role for both projects, and the size of each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleOverlap {
    pub shared: usize,
    pub a: usize,
    pub b: usize,
}

impl RoleOverlap {
    fn of(a: &HashSet<WalletId>, b: &HashSet<WalletId>) -> Self {
        Self {
            shared: a.intersection(b).count(),
            a: a.len(),
            b: b.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoOccurrence {
    pub buyers: RoleOverlap,
    pub sellers: RoleOverlap,
    pub holders: RoleOverlap,
}

/// A coefficient in `[-1, 1]`; 0 and `degenerate` when a series is constant
/// or the window has a single day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub value: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelations {
    pub buyers: Coefficient,
    pub sellers: Coefficient,
    pub holders: Coefficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDetailResponse {
    pub window: TimeWindow,
    pub a: ProjectId,
    pub b: ProjectId,
    pub co_occurrence: CoOccurrence,
    pub correlations: PairCorrelations,
    /// Series for `a` then `b`.
    pub evolution: Vec<EvolutionSeries>,
}

fn coefficient(x: &[u32], y: &[u32]) -> Coefficient {
    let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    match pearson_correlation(&x, &y) {
        Ok(c) => Coefficient {
            value: c.value,
            degenerate: c.degenerate,
        },
        Err(_) => Coefficient {
            value: 0.0,
            degenerate: true,
        },
    }
}

pub fn pair_detail(
    dataset: &Dataset,
    a: &ProjectId,
    b: &ProjectId,
    window: Option<TimeWindow>,
    selection: &AttributeSelection,
) -> Result<PairDetailResponse, ApiError> {
    for p in [a, b] {
        if dataset.project(p).is_none() {
            return Err(ApiError::NotFound(format!("unknown project {p}")));
        }
    }
    if a == b {
        return Err(ApiError::SamePair(a.to_string()));
    }
    let window = resolve_window(dataset, window)?;
    require_alive(dataset, a, &window)?;
    require_alive(dataset, b, &window)?;
    let ra = dataset.roles().project(a).expect("alive implies roles");
    let rb = dataset.roles().project(b).expect("alive implies roles");
    let co_occurrence = CoOccurrence {
        buyers: RoleOverlap::of(&ra.buyers_in(&window), &rb.buyers_in(&window)),
        sellers: RoleOverlap::of(&ra.sellers_in(&window), &rb.sellers_in(&window)),
        holders: RoleOverlap::of(&ra.holders_in(&window), &rb.holders_in(&window)),
    };
    let evolution = evolution_many(dataset, &[a.clone(), b.clone()], window, selection);
    let (ea, eb) = (&evolution[0], &evolution[1]);
    let correlations = PairCorrelations {
        buyers: coefficient(&ea.buyers, &eb.buyers),
        sellers: coefficient(&ea.sellers, &eb.sellers),
        holders: coefficient(&ea.holders, &eb.holders),
    };
    Ok(PairDetailResponse {
        window,
        a: a.clone(),
        b: b.clone(),
        co_occurrence,
        correlations,
        evolution,
    })
}
