//! Growth curves for cumulative holders: the Bass diffusion ODE, the
//! minimal-substitution power law and the Gompertz curve, plus least-squares
//! fitting and R².

mod lm;

use std::fmt;
use std::str::FromStr;

use chrono::Days;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::model::ProjectId;
use lm::{levenberg_marquardt, CurveModel, LmOptions};

/// Largest RK4 step in days.
pub const MAX_RK_STEP: f64 = 0.1;
const STARTS: usize = 5;
const START_JITTER: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("initial value {i0} exceeds market potential {m}")]
    InvalidInitial { i0: f64, m: f64 },
    #[error("time {0} must be positive")]
    InvalidTime(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("length mismatch: {0} vs {1}")]
    ShapeError(usize, usize),
    #[error("need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("{} parameters are not identifiable from this curve", .fit.model)]
    NonIdentifiable { fit: Box<GrowthFit> },
    #[error("unknown project {0}")]
    UnknownProject(ProjectId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowthModel {
    Bass,
    Ms,
    Gompertz,
}

impl GrowthModel {
    pub const ALL: [GrowthModel; 3] = [GrowthModel::Bass, GrowthModel::Ms, GrowthModel::Gompertz];

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            GrowthModel::Bass => &["p", "q", "m"],
            GrowthModel::Ms => &["h", "eta"],
            GrowthModel::Gompertz => &["A", "B", "C"],
        }
    }

    pub fn param_count(self) -> usize {
        self.param_names().len()
    }
}

impl fmt::Display for GrowthModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GrowthModel::Bass => "bass",
            GrowthModel::Ms => "ms",
            GrowthModel::Gompertz => "gompertz",
        })
    }
}

impl FromStr for GrowthModel {
    type Err = FitError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bass" => Ok(GrowthModel::Bass),
            "ms" => Ok(GrowthModel::Ms),
            "gompertz" => Ok(GrowthModel::Gompertz),
            other => Err(FitError::InvalidParameter(format!("unknown model {other:?}"))),
        }
    }
}

/// Cumulative holders `values` at days since launch `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCurve {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
}

impl GrowthCurve {
    pub fn new(t: Vec<f64>, values: Vec<f64>) -> Result<Self, FitError> {
        if t.len() != values.len() {
            return Err(FitError::ShapeError(t.len(), values.len()));
        }
        if t.is_empty() {
            return Err(FitError::InsufficientData { needed: 1, got: 0 });
        }
        if let Some(&bad) = t.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(FitError::InvalidTime(bad));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FitError::InvalidCurve("times must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(FitError::InvalidCurve("values must be finite and non-negative".into()));
        }
        Ok(Self { t, values })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub model: GrowthModel,
    /// Aligned with `model.param_names()`.
    pub params: Vec<f64>,
    pub r_squared: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Square root of the residual sum of squares.
    pub residual_norm: f64,
    /// Multi-start index that produced the fit.
    pub start: usize,
    /// Bass only: `I` at the first sample time, held fixed during the fit.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub initial_value: Option<f64>,
}

impl GrowthFit {
    pub fn param(&self, name: &str) -> Option<f64> {
        let idx = self.model.param_names().iter().position(|n| *n == name)?;
        self.params.get(idx).copied()
    }

    pub fn predict(&self, t: &[f64]) -> Result<Vec<f64>, FitError> {
        let p = &self.params;
        match self.model {
            GrowthModel::Bass => {
                check_grid(t)?;
                Ok(bass_integrate(p[0], p[1], p[2], self.initial_value.unwrap_or(0.0), t, MAX_RK_STEP))
            }
            GrowthModel::Ms => Ok(ms_curve(p[0], p[1], t)?.values),
            GrowthModel::Gompertz => Ok(gompertz_curve(p[0], p[1], p[2], t)?.values),
        }
    }
}

fn check_grid(t: &[f64]) -> Result<(), FitError> {
    GrowthCurve::new(t.to_vec(), vec![0.0; t.len()]).map(|_| ())
}

fn bass_rate(p: f64, q: f64, m: f64, i: f64) -> f64 {
    (p + q * i / m) * (m - i)
}

/// RK4 from `(t[0], i0)`, sampled at each grid point.
fn bass_integrate(p: f64, q: f64, m: f64, i0: f64, t: &[f64], max_step: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut i = i0;
    out.push(i);
    for w in t.windows(2) {
        let span = w[1] - w[0];
        let steps = (span / max_step).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for _ in 0..steps {
            let k1 = bass_rate(p, q, m, i);
            let k2 = bass_rate(p, q, m, i + 0.5 * h * k1);
            let k3 = bass_rate(p, q, m, i + 0.5 * h * k2);
            let k4 = bass_rate(p, q, m, i + h * k3);
            i += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push(i);
    }
    out
}

/// Integrates `dI/dt = (p + q·I/m)(m − I)` with `I(t[0]) = i0`.
pub fn bass_curve(p: f64, q: f64, m: f64, i0: f64, t: &[f64]) -> Result<GrowthCurve, FitError> {
    if !(p >= 0.0 && q >= 0.0 && p.is_finite() && q.is_finite()) {
        return Err(FitError::InvalidParameter(format!("p = {p}, q = {q}")));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(FitError::InvalidParameter(format!("m = {m}")));
    }
    if !(i0 >= 0.0) {
        return Err(FitError::InvalidParameter(format!("I0 = {i0}")));
    }
    if i0 > m {
        return Err(FitError::InvalidInitial { i0, m });
    }
    check_grid(t)?;
    GrowthCurve::new(t.to_vec(), bass_integrate(p, q, m, i0, t, MAX_RK_STEP))
}

/// `I(t) = h·t^eta`.
pub fn ms_curve(h: f64, eta: f64, t: &[f64]) -> Result<GrowthCurve, FitError> {
    if !(h >= 0.0 && h.is_finite() && eta.is_finite()) {
        return Err(FitError::InvalidParameter(format!("h = {h}, eta = {eta}")));
    }
    if let Some(&bad) = t.iter().find(|x| !(**x > 0.0)) {
        return Err(FitError::InvalidTime(bad));
    }
    check_grid(t)?;
    GrowthCurve::new(t.to_vec(), t.iter().map(|x| h * x.powf(eta)).collect())
}

/// `I(t) = A·exp(−B·exp(−C·t))`.
pub fn gompertz_curve(a: f64, b: f64, c: f64, t: &[f64]) -> Result<GrowthCurve, FitError> {
    if !(a > 0.0 && b >= 0.0 && c >= 0.0 && a.is_finite() && b.is_finite() && c.is_finite()) {
        return Err(FitError::InvalidParameter(format!("A = {a}, B = {b}, C = {c}")));
    }
    check_grid(t)?;
    GrowthCurve::new(t.to_vec(), t.iter().map(|x| a * (-b * (-c * x).exp()).exp()).collect())
}

/// Coefficient of determination, with `degenerate` set for a constant
/// observed series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RSquared {
    pub value: f64,
    pub degenerate: bool,
}

pub fn r_squared(observed: &[f64], predicted: &[f64]) -> Result<RSquared, FitError> {
    if observed.len() != predicted.len() {
        return Err(FitError::ShapeError(observed.len(), predicted.len()));
    }
    if observed.len() < 2 {
        return Err(FitError::InsufficientData {
            needed: 2,
            got: observed.len(),
        });
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|o| (o - mean) * (o - mean)).sum();
    let ss_res: f64 = observed.iter().zip(predicted).map(|(o, p)| (o - p) * (o - p)).sum();
    if ss_tot == 0.0 {
        let value = if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
        return Ok(RSquared { value, degenerate: true });
    }
    Ok(RSquared {
        value: 1.0 - ss_res / ss_tot,
        degenerate: false,
    })
}

/// Bass in `(ln p, ln q, ln m)`; the initial value is pinned to the first sample.
struct BassModel<'a> {
    t: &'a [f64],
    i0: f64,
}

impl CurveModel for BassModel<'_> {
    fn values(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let v = bass_integrate(theta[0].exp(), theta[1].exp(), theta[2].exp(), self.i0, self.t, MAX_RK_STEP);
        v.iter().all(|x| x.is_finite()).then_some(v)
    }
}

/// MS in `(ln h, eta)`.
struct MsModel<'a> {
    t: &'a [f64],
}

impl CurveModel for MsModel<'_> {
    fn values(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let v: Vec<f64> = self.t.iter().map(|x| (theta[0] + theta[1] * x.ln()).exp()).collect();
        v.iter().all(|x| x.is_finite()).then_some(v)
    }

    fn jacobian(&self, _theta: &[f64], values: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_fn(self.t.len(), 2, |i, k| match k {
            0 => values[i],
            _ => values[i] * self.t[i].ln(),
        }))
    }
}

/// Gompertz in `(ln A, ln B, ln C)`.
struct GompertzModel<'a> {
    t: &'a [f64],
}

impl CurveModel for GompertzModel<'_> {
    fn values(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let (a, b, c) = (theta[0].exp(), theta[1].exp(), theta[2].exp());
        let v: Vec<f64> = self.t.iter().map(|x| a * (-b * (-c * x).exp()).exp()).collect();
        v.iter().all(|x| x.is_finite()).then_some(v)
    }

    fn jacobian(&self, theta: &[f64], values: &[f64]) -> Option<DMatrix<f64>> {
        let (b, c) = (theta[1].exp(), theta[2].exp());
        Some(DMatrix::from_fn(self.t.len(), 3, |i, k| {
            let t = self.t[i];
            let decay = b * (-c * t).exp();
            match k {
                0 => values[i],
                1 => -values[i] * decay,
                _ => values[i] * decay * c * t,
            }
        }))
    }
}

fn to_theta(model: GrowthModel, params: &[f64]) -> Option<Vec<f64>> {
    let theta: Vec<f64> = match model {
        GrowthModel::Ms => vec![params[0].ln(), params[1]],
        _ => params.iter().map(|p| p.ln()).collect(),
    };
    theta.iter().all(|x| x.is_finite()).then_some(theta)
}

fn from_theta(model: GrowthModel, theta: &[f64]) -> Vec<f64> {
    match model {
        GrowthModel::Ms => vec![theta[0].exp(), theta[1]],
        _ => theta.iter().map(|x| x.exp()).collect(),
    }
}

/// Least-squares line `y = a + b·x`.
fn line_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

/// Heuristic starting points, in parameter space: a regression-based guess
/// followed by a plain one.
fn heuristic_starts(model: GrowthModel, curve: &GrowthCurve) -> Vec<Vec<f64>> {
    let (t, v) = (&curve.t, &curve.values);
    let max = v.iter().copied().fold(0.0, f64::max).max(1.0);
    let span = (t[t.len() - 1] - t[0]).max(1.0);
    let mut starts = Vec::new();
    match model {
        GrowthModel::Ms => {
            let (lx, ly): (Vec<f64>, Vec<f64>) = t
                .iter()
                .zip(v)
                .filter(|(t, v)| **t > 0.0 && **v > 0.0)
                .map(|(t, v)| (t.ln(), v.ln()))
                .unzip();
            if let Some((a, b)) = line_fit(&lx, &ly) {
                starts.push(vec![a.exp(), b]);
            }
            starts.push(vec![v[0].max(1.0), 0.2]);
        }
        GrowthModel::Gompertz => {
            let a0 = 1.05 * max;
            let (xs, ys): (Vec<f64>, Vec<f64>) = t
                .iter()
                .zip(v)
                .filter(|(_, v)| **v > 0.0)
                .map(|(t, v)| (*t, (-(v / a0).ln()).ln()))
                .unzip();
            if let Some((lnb, slope)) = line_fit(&xs, &ys) {
                if slope < 0.0 {
                    starts.push(vec![a0, lnb.exp(), -slope]);
                }
            }
            let b0 = if v[0] > 0.0 { (max / v[0]).ln().max(0.1) } else { 1.0 };
            starts.push(vec![max, b0, 3.0 / span]);
        }
        GrowthModel::Bass => {
            // dI/dt = pm + (q − p)·I − (q/m)·I², regressed on I and I².
            if t.len() >= 3 {
                let mut rows = Vec::new();
                let mut rhs = Vec::new();
                for k in 1..t.len() - 1 {
                    rows.extend([1.0, v[k], v[k] * v[k]]);
                    rhs.push((v[k + 1] - v[k - 1]) / (t[k + 1] - t[k - 1]));
                }
                let x = DMatrix::from_row_slice(rhs.len(), 3, &rows);
                let y = nalgebra::DVector::from_vec(rhs);
                if let Ok(sol) = x.svd(true, true).solve(&y, 1e-18) {
                    let (a, b, c) = (sol[0], sol[1], sol[2]);
                    let disc = b * b - 4.0 * a * c;
                    if c < 0.0 && disc >= 0.0 {
                        let m = (-b - disc.sqrt()) / (2.0 * c);
                        let (p, q) = (a / m, -c * m);
                        if m > max && p > 0.0 && q > 0.0 {
                            starts.push(vec![p, q, m]);
                        }
                    }
                }
            }
            let m0 = 2.0 * max;
            let slope = ((v[1] - v[0]) / (t[1] - t[0])).max(0.0);
            let p0 = (slope / m0).max(1e-6);
            starts.push(vec![p0, 10.0 * p0, m0]);
        }
    }
    starts
}

/// Fits `model` to `curve` by multi-start Levenberg–Marquardt. `init`, when
/// given, replaces the regression-based start. Bass keeps `I(t[0])` at the
/// first observed value.
pub fn fit(curve: &GrowthCurve, model: GrowthModel, init: Option<&[f64]>, seed: u64) -> Result<GrowthFit, FitError> {
    let needed = (model.param_count() + 1).max(4);
    if curve.len() < needed {
        return Err(FitError::InsufficientData {
            needed,
            got: curve.len(),
        });
    }
    if model == GrowthModel::Ms {
        if let Some(&bad) = curve.t.iter().find(|x| !(**x > 0.0)) {
            return Err(FitError::InvalidTime(bad));
        }
    }
    if let Some(init) = init {
        if init.len() != model.param_count() {
            return Err(FitError::ShapeError(init.len(), model.param_count()));
        }
    }

    let mut starts = heuristic_starts(model, curve);
    if let Some(init) = init {
        starts.insert(0, init.to_vec());
    }
    let mut thetas: Vec<Vec<f64>> = starts.iter().filter_map(|p| to_theta(model, p)).collect();
    if thetas.is_empty() {
        return Err(FitError::InvalidParameter("no valid starting point".into()));
    }
    let base = thetas[0].clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, START_JITTER).expect("positive jitter");
    while thetas.len() < STARTS {
        thetas.push(base.iter().map(|x| x + noise.sample(&mut rng)).collect());
    }
    thetas.truncate(STARTS);

    let i0 = curve.values[0];
    let bass = BassModel { t: &curve.t, i0 };
    let ms = MsModel { t: &curve.t };
    let gompertz = GompertzModel { t: &curve.t };
    let solver: &dyn Fn(&[f64]) -> Option<lm::LmOutcome> = &|start| {
        let opts = LmOptions::default();
        match model {
            GrowthModel::Bass => levenberg_marquardt(&bass, &curve.values, start, &opts),
            GrowthModel::Ms => levenberg_marquardt(&ms, &curve.values, start, &opts),
            GrowthModel::Gompertz => levenberg_marquardt(&gompertz, &curve.values, start, &opts),
        }
    };

    let mut best: Option<(usize, lm::LmOutcome)> = None;
    for (idx, theta) in thetas.iter().enumerate() {
        let Some(out) = solver(theta) else { continue };
        if best.as_ref().is_none_or(|(_, b)| out.ssr < b.ssr) {
            best = Some((idx, out));
        }
    }
    let Some((start, out)) = best else {
        return Err(FitError::InvalidParameter("model could not be evaluated at any start".into()));
    };

    let params = from_theta(model, &out.theta);
    let predicted = match model {
        GrowthModel::Bass => bass.values(&out.theta),
        GrowthModel::Ms => ms.values(&out.theta),
        GrowthModel::Gompertz => gompertz.values(&out.theta),
    }
    .expect("best start evaluated");
    let r2 = r_squared(&curve.values, &predicted)?;
    let mut result = GrowthFit {
        model,
        params,
        r_squared: r2.value,
        converged: out.converged,
        iterations: out.iterations,
        residual_norm: out.ssr.sqrt(),
        start,
        initial_value: (model == GrowthModel::Bass).then_some(i0),
    };
    if r2.degenerate && model != GrowthModel::Ms {
        result.converged = false;
        return Err(FitError::NonIdentifiable { fit: Box::new(result) });
    }
    Ok(result)
}

/// Cumulative distinct owners of `project` for each day from launch to
/// `until`, with `t` counted from 1 on the launch day.
pub fn holder_curve(dataset: &Dataset, project: &ProjectId, until: chrono::NaiveDate) -> Result<GrowthCurve, FitError> {
    let launch = dataset
        .project(project)
        .ok_or_else(|| FitError::UnknownProject(project.clone()))?
        .launch_date;
    let roles = dataset.roles().project(project);
    let mut t = Vec::new();
    let mut values = Vec::new();
    let mut day = launch;
    let mut k = 1.0;
    while day <= until {
        t.push(k);
        values.push(roles.map(|r| r.owners_up_to(day)).unwrap_or(0) as f64);
        k += 1.0;
        day = day + Days::new(1);
    }
    GrowthCurve::new(t, values)
}
