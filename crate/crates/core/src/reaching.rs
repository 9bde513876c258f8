//! Disturbance-compensated reaching law and the robust static-surface SMC.
//!
//! The reaching law is `s(k+1) − s(k) = −μ₀ s(k) − ξT sgn s(k) + ϖ(k) − ϖ̂(k−1)`,
//! where `ϖ̂(k−1)` is a running estimate of the unmodelled term built from the
//! deviation between the ideal and the realized reaching steps.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::ControlError;
use crate::plant::RegularForm;
use crate::surface::SurfaceGain;

/// Componentwise sign with `sgn(0) = −1` (also for `−0.0`).
pub fn sgn(v: &DVector<f64>) -> DVector<f64> {
    v.map(|x| if x > 0.0 { 1.0 } else { -1.0 })
}

/// Lumped reaching-law parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachingParams {
    /// `μT ∈ (0, 1)`
    pub mu0: f64,
    /// `ξT > 0`
    pub xi_t: f64,
    /// Assumed bound on the compensator increment.
    pub delta_bar: f64,
}

impl ReachingParams {
    pub fn new(mu0: f64, xi_t: f64, delta_bar: f64) -> Result<Self, ControlError> {
        if !(mu0 > 0.0 && mu0 < 1.0) {
            return Err(ControlError::Params(format!("mu0 must lie in (0, 1), got {mu0}")));
        }
        if !(xi_t > 0.0 && xi_t.is_finite()) {
            return Err(ControlError::Params(format!("xi_t must be positive, got {xi_t}")));
        }
        if !(delta_bar >= 0.0 && delta_bar.is_finite()) {
            return Err(ControlError::Params(format!(
                "delta_bar must be non-negative, got {delta_bar}"
            )));
        }
        Ok(Self {
            mu0,
            xi_t,
            delta_bar,
        })
    }

    /// `√n_u·ξT > δ̄`, needed for a finite quasi-sliding band.
    pub fn band_defined(&self, n_u: usize) -> bool {
        (n_u as f64).sqrt() * self.xi_t > self.delta_bar
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompensatorMode {
    /// Recursive accumulation of the last reaching-step deviation.
    #[default]
    OneStep,
    /// The summation over the logged sliding history, evaluated term by term.
    LiteralSum,
    /// No compensation, `ϖ̂ ≡ 0`.
    Off,
}

/// Running disturbance compensator for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatorState {
    mode: CompensatorMode,
    s_prev: Option<DVector<f64>>,
    mu0_prev: f64,
    varpi_hat: DVector<f64>,
    last_increment: f64,
    /// `s(0), s(1), …` (only kept in literal-sum mode).
    history: Vec<DVector<f64>>,
    seen: usize,
}

impl CompensatorState {
    pub fn new(n_u: usize, mode: CompensatorMode, mu0_init: f64) -> Self {
        Self {
            mode,
            s_prev: None,
            mu0_prev: mu0_init,
            varpi_hat: DVector::zeros(n_u),
            last_increment: 0.0,
            history: Vec::new(),
            seen: 0,
        }
    }

    pub fn mode(&self) -> CompensatorMode {
        self.mode
    }

    /// Current estimate `ϖ̂(k−1)`.
    pub fn varpi_hat(&self) -> &DVector<f64> {
        &self.varpi_hat
    }

    pub fn s_prev(&self) -> Option<&DVector<f64>> {
        self.s_prev.as_ref()
    }

    pub fn mu0_prev(&self) -> f64 {
        self.mu0_prev
    }

    /// `‖ϖ̂(k−1) − ϖ̂(k−2)‖` from the latest update.
    pub fn last_increment(&self) -> f64 {
        self.last_increment
    }

    /// Feeds `s(k)` and refreshes `ϖ̂(k−1)`. The estimate stays zero for `k < 2`.
    pub fn update(&mut self, s_now: &DVector<f64>, xi_t: f64) -> &DVector<f64> {
        let k = self.seen;
        let before = self.varpi_hat.clone();
        match self.mode {
            CompensatorMode::Off => {}
            CompensatorMode::OneStep => {
                if k >= 2 {
                    let s_prev = self.s_prev.as_ref().expect("s(k-1) recorded for k >= 1");
                    let deviation =
                        s_now - s_prev * (1.0 - self.mu0_prev) + sgn(s_prev) * xi_t;
                    self.varpi_hat += deviation;
                }
            }
            CompensatorMode::LiteralSum => {
                self.history.push(s_now.clone());
                if k >= 2 {
                    self.varpi_hat = literal_sum(&self.history, self.mu0_prev, xi_t);
                }
            }
        }
        self.last_increment = (&self.varpi_hat - before).norm();
        self.s_prev = Some(s_now.clone());
        self.seen += 1;
        &self.varpi_hat
    }

    /// Records the convergence parameter actually used at this step.
    pub fn commit(&mut self, mu0_used: f64) {
        self.mu0_prev = mu0_used;
    }
}

/// `Σ_{i=2}^{k} { s(i) − [(1−μ)s(k−i) − ξT sgn s(k)] }` over `history = s(0..=k)`.
pub fn literal_sum(history: &[DVector<f64>], mu0: f64, xi_t: f64) -> DVector<f64> {
    let k = history.len() - 1;
    let n = history[0].len();
    let mut acc = DVector::zeros(n);
    if k < 2 {
        return acc;
    }
    let sgn_now = sgn(&history[k]);
    for i in 2..=k {
        acc += &history[i] - (&history[k - i] * (1.0 - mu0) - &sgn_now * xi_t);
    }
    acc
}

/// `μ₀s + ξT·sgn s − s + ϖ̂`, the model-free part of both control laws.
pub fn reaching_bracket(
    mu0: f64,
    s: &DVector<f64>,
    xi_t: f64,
    varpi_hat: &DVector<f64>,
) -> DVector<f64> {
    s * mu0 + sgn(s) * xi_t - s + varpi_hat
}

/// Robust SMC law:
/// `u = −(ḠB)⁻¹[μ₀s + ξT sgn s + ḠAx − s + ϖ̂(k−1)]`, `s = Ḡx`.
pub fn robust_smc_control(
    rf: &RegularForm,
    gain: &SurfaceGain,
    x: &DVector<f64>,
    varpi_hat: &DVector<f64>,
    params: &ReachingParams,
) -> DVector<f64> {
    let s = gain.sliding(x);
    let model = &gain.g_bar * (&rf.a * x);
    let bracket = reaching_bracket(params.mu0, &s, params.xi_t, varpi_hat) + model;
    -(rf.b1_inv() * bracket)
}

/// One step of the robust controller.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustStep {
    pub u: DVector<f64>,
    pub s: DVector<f64>,
    pub varpi_hat: DVector<f64>,
}

/// Robust static-surface SMC with its compensator.
#[derive(Debug, Clone)]
pub struct RobustSmc {
    pub gain: SurfaceGain,
    pub params: ReachingParams,
    compensator: CompensatorState,
}

impl RobustSmc {
    pub fn new(gain: SurfaceGain, params: ReachingParams, mode: CompensatorMode) -> Self {
        let n_u = gain.g.nrows();
        Self {
            compensator: CompensatorState::new(n_u, mode, params.mu0),
            gain,
            params,
        }
    }

    pub fn compensator(&self) -> &CompensatorState {
        &self.compensator
    }

    pub fn control(&mut self, rf: &RegularForm, x: &DVector<f64>) -> RobustStep {
        let s = self.gain.sliding(x);
        let varpi_hat = self.compensator.update(&s, self.params.xi_t).clone();
        let u = robust_smc_control(rf, &self.gain, x, &varpi_hat, &self.params);
        self.compensator.commit(self.params.mu0);
        RobustStep { u, s, varpi_hat }
    }
}
