//! Levenberg–Marquardt for small dense least-squares problems.

use nalgebra::{DMatrix, DVector};

/// A curve model evaluated at fixed sample points, parameterized by `theta`.
pub(crate) trait CurveModel {
    /// Model values, or `None` when they are not all finite.
    fn values(&self, theta: &[f64]) -> Option<Vec<f64>>;

    /// Jacobian of `values` with respect to `theta` (rows = samples).
    fn jacobian(&self, theta: &[f64], values: &[f64]) -> Option<DMatrix<f64>> {
        let _ = values;
        central_difference(self, theta)
    }
}

pub(crate) fn central_difference<M: CurveModel + ?Sized>(model: &M, theta: &[f64]) -> Option<DMatrix<f64>> {
    let mut columns = Vec::with_capacity(theta.len());
    let mut probe = theta.to_vec();
    for k in 0..theta.len() {
        let step = 1e-6 * theta[k].abs().max(1.0);
        probe[k] = theta[k] + step;
        let up = model.values(&probe)?;
        probe[k] = theta[k] - step;
        let down = model.values(&probe)?;
        probe[k] = theta[k];
        columns.push(DVector::from_iterator(
            up.len(),
            up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * step)),
        ));
    }
    Some(DMatrix::from_columns(&columns))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmOptions {
    pub max_iter: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub gtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 300,
            ftol: 1e-15,
            xtol: 1e-12,
            gtol: 1e-14,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub theta: Vec<f64>,
    /// Sum of squared residuals.
    pub ssr: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn ssr(observed: &[f64], values: &[f64]) -> f64 {
    observed.iter().zip(values).map(|(o, v)| (o - v) * (o - v)).sum()
}

/// Minimizes the squared residuals from `start`. Returns `None` if the model
/// cannot be evaluated at the start.
pub(crate) fn levenberg_marquardt<M: CurveModel + ?Sized>(
    model: &M,
    observed: &[f64],
    start: &[f64],
    opts: &LmOptions,
) -> Option<LmOutcome> {
    let y = DVector::from_column_slice(observed);
    let mut theta = start.to_vec();
    let mut values = model.values(&theta)?;
    let mut cost = ssr(observed, &values);
    let mut jac = model.jacobian(&theta, &values)?;
    let mut mu = -1.0;
    let mut nu = 2.0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        if cost == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;
        let r = &y - DVector::from_column_slice(&values);
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * r;
        if g.amax() <= opts.gtol * cost.max(1.0) {
            converged = true;
            break;
        }
        // Marquardt scaling, with a floor so flat directions stay damped.
        let diag_max = a.diagonal().amax().max(f64::MIN_POSITIVE);
        let d = a.diagonal().map(|v| v.max(1e-12 * diag_max));
        if mu < 0.0 {
            mu = 1e-3;
        }

        let mut accepted = false;
        while !accepted {
            let mut damped = a.clone();
            for k in 0..d.len() {
                damped[(k, k)] += mu * d[k];
            }
            let Some(delta) = damped.cholesky().map(|c| c.solve(&g)) else {
                mu *= nu;
                nu *= 2.0;
                if mu > 1e30 {
                    break;
                }
                continue;
            };
            let candidate: Vec<f64> = theta.iter().zip(delta.iter()).map(|(t, s)| t + s).collect();
            let trial = model.values(&candidate);
            let trial_cost = trial.as_ref().map(|v| ssr(observed, v)).unwrap_or(f64::INFINITY);
            // Predicted reduction of the linearized model.
            let predicted = delta.dot(&(d.component_mul(&delta) * mu + &g));
            let rho = if predicted > 0.0 { (cost - trial_cost) / predicted } else { -1.0 };
            if trial_cost.is_finite() && trial_cost < cost && rho > 0.0 {
                let step_norm = delta.norm();
                let theta_norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
                let rel_drop = (cost - trial_cost) / cost;
                theta = candidate;
                values = trial.expect("finite cost implies values");
                cost = trial_cost;
                mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;
                accepted = true;
                if rel_drop <= opts.ftol || step_norm <= opts.xtol * (theta_norm + opts.xtol) {
                    converged = true;
                }
            } else {
                mu *= nu;
                nu *= 2.0;
                if mu > 1e30 {
                    break;
                }
            }
        }
        if !accepted {
            // No damping level improves the cost: a minimum to working precision.
            converged = true;
            break;
        }
        if converged {
            break;
        }
        jac = model.jacobian(&theta, &values)?;
    }

    Some(LmOutcome {
        theta,
        ssr: cost,
        iterations,
        converged,
    })
}
