//! Damped Levenberg–Marquardt for small square or over-determined nonlinear
//! systems `r(x) = 0`, with central finite-difference Jacobians.
//!
//! Damping is Marquardt-scaled: each iteration solves
//! `(JᵀJ + λ·diag(JᵀJ)) δ = −Jᵀr`, with diagonal entries floored at `1e-12`.
//! A step is accepted only if it strictly reduces `‖r‖`, so the residual norm
//! over accepted iterates is non-increasing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::SolveError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmOptions {
    pub max_iter: usize,
    pub tol_residual: f64,
    pub tol_step: f64,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Base finite-difference step, scaled by `max(1, |xᵢ|)`.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_residual: 1e-10,
            tol_step: 1e-12,
            lambda_init: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
            fd_step: 1e-6,
        }
    }
}

impl LmOptions {
    pub fn validate(&self) -> Result<(), SolveError> {
        let positive = [
            ("tol_residual", self.tol_residual),
            ("tol_step", self.tol_step),
            ("lambda_init", self.lambda_init),
            ("fd_step", self.fd_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolveError::Options(format!("{name} must be positive")));
            }
        }
        if self.max_iter == 0 {
            return Err(SolveError::Options("max_iter must be positive".into()));
        }
        if !(self.lambda_up > 1.0 && self.lambda_down > 0.0 && self.lambda_down < 1.0) {
            return Err(SolveError::Options(
                "need lambda_up > 1 > lambda_down > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmResult {
    pub solution: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Damping value used at each iteration.
    pub damping_trace: Vec<f64>,
    /// Residual norm after each accepted step, starting with the initial point.
    pub accepted_norms: Vec<f64>,
}

/// Central-difference Jacobian; column `i` is `(r(x+hᵢeᵢ) − r(x−hᵢeᵢ)) / 2hᵢ`
/// with `hᵢ = h·max(1, |xᵢ|)`.
pub fn fd_jacobian<F>(residual: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>, SolveError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if !(h > 0.0) {
        return Err(SolveError::Options("finite-difference step must be positive".into()));
    }
    let r0 = residual(x);
    let mut jac = DMatrix::zeros(r0.len(), x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let hi = h * x[i].abs().max(1.0);
        let xi = x[i];
        xp[i] = xi + hi;
        let rp = residual(&xp);
        xp[i] = xi - hi;
        let rm = residual(&xp);
        xp[i] = xi;
        if rp.len() != r0.len() || rm.len() != r0.len() {
            return Err(SolveError::Options("residual length changed".into()));
        }
        let col = (rp - rm) / (2.0 * hi);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NonFinite { iteration: 0 });
        }
        jac.set_column(i, &col);
    }
    Ok(jac)
}

/// Levenberg–Marquardt with finite-difference Jacobians.
pub fn levenberg_marquardt<F>(
    residual: F,
    x0: &DVector<f64>,
    opts: &LmOptions,
) -> Result<LmResult, SolveError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let h = opts.fd_step;
    levenberg_marquardt_with_jacobian(&residual, |x| fd_jacobian(&residual, x, h), x0, opts)
}

/// Levenberg–Marquardt with a caller-supplied Jacobian.
pub fn levenberg_marquardt_with_jacobian<F, J>(
    residual: F,
    jacobian: J,
    x0: &DVector<f64>,
    opts: &LmOptions,
) -> Result<LmResult, SolveError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> Result<DMatrix<f64>, SolveError>,
{
    opts.validate()?;
    let mut x = x0.clone();
    let mut r = residual(&x);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite { iteration: 0 });
    }
    let mut norm = r.norm();
    let mut lambda = opts.lambda_init;
    let mut damping_trace = Vec::new();
    let mut accepted_norms = vec![norm];
    let mut converged = norm <= opts.tol_residual;
    let mut iterations = 0;
    let mut jac: Option<DMatrix<f64>> = None;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let j = match jac.take() {
            Some(j) => j,
            None => jacobian(&x).map_err(|e| match e {
                SolveError::NonFinite { .. } => SolveError::NonFinite { iteration: iterations },
                other => other,
            })?,
        };
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        damping_trace.push(lambda);

        let mut lhs = jtj.clone();
        for i in 0..lhs.nrows() {
            lhs[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
        }
        let rhs = -&g;
        let delta = match lhs.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => match lhs.lu().solve(&rhs) {
                Some(d) => d,
                None => {
                    lambda *= opts.lambda_up;
                    jac = Some(j);
                    continue;
                }
            },
        };

        let candidate = &x + &delta;
        let r_new = residual(&candidate);
        if r_new.iter().any(|v| !v.is_finite()) {
            if lambda > 1e300 {
                return Err(SolveError::NonFinite { iteration: iterations });
            }
            lambda *= opts.lambda_up;
            jac = Some(j);
            continue;
        }
        let new_norm = r_new.norm();
        if new_norm < norm {
            let step_norm = delta.norm();
            x = candidate;
            r = r_new;
            norm = new_norm;
            accepted_norms.push(norm);
            lambda = (lambda * opts.lambda_down).max(1e-300);
            if norm <= opts.tol_residual
                || step_norm <= opts.tol_step * (x.norm() + opts.tol_step)
            {
                converged = true;
            }
        } else {
            lambda *= opts.lambda_up;
            jac = Some(j);
            if !lambda.is_finite() || lambda > 1e300 {
                break;
            }
        }
    }

    Ok(LmResult {
        solution: x,
        residual_norm: norm,
        iterations,
        converged,
        damping_trace,
        accepted_norms,
    })
}
