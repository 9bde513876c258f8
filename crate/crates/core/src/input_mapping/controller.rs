//! Co-design solve and the input-mapping control law.

use nalgebra::{DMatrix, DVector};

use super::band::{band_policy, BandDecision, RunningBand};
use super::history::HistoryBuffer;
use super::objective::{reduced_residual, stationarity_residual, CoDesignContext};
use crate::error::ControlError;
use crate::linalg;
use crate::nlsolve::{levenberg_marquardt, LmOptions};
use crate::plant::RegularForm;
use crate::reaching::{reaching_bracket, CompensatorMode, CompensatorState, ReachingParams};
use crate::surface::SurfaceGain;

/// Saturation interval for the solved convergence parameter.
pub const MU0_MIN: f64 = 0.01;
pub const MU0_MAX: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct CoDesignSolution {
    pub l: DVector<f64>,
    /// `G(k+1)`
    pub g_next: DMatrix<f64>,
    pub mu0: f64,
    /// Norm of the full stationarity residual at the returned point.
    pub residual_norm: f64,
    /// `μ̄₀` was saturated and `(L, G)` re-solved.
    pub clamped: bool,
    pub converged: bool,
    /// The solver failed and the frozen-branch solution was used instead.
    pub fallback: bool,
    pub iterations: usize,
}

/// Solves the stationarity system from `(L, G) = 0`, `μ̄₀ = mu0_start`.
///
/// A solved `μ̄₀` outside `[MU0_MIN, MU0_MAX]` is saturated and the first two
/// blocks are solved again with `μ̄₀` held at the bound.
pub fn co_design_solve(
    ctx: &CoDesignContext,
    mu0_start: f64,
    opts: &LmOptions,
) -> Result<CoDesignSolution, ControlError> {
    let n_lg = ctx.n_unknowns() - 1;
    let mut omega0 = DVector::zeros(ctx.n_unknowns());
    omega0[n_lg] = mu0_start;
    let res = levenberg_marquardt(|w| stationarity_residual(ctx, w), &omega0, opts)
        .map_err(|e| ControlError::Params(format!("co-design solve: {e}")))?;
    let mut iterations = res.iterations;
    let mut converged = res.converged;
    let mut omega = res.solution;
    let mu = omega[n_lg];
    let clamped = !(MU0_MIN..=MU0_MAX).contains(&mu);
    if clamped {
        let mu_fixed = mu.clamp(MU0_MIN, MU0_MAX);
        let lg0 = omega.rows(0, n_lg).into_owned();
        let sub = levenberg_marquardt(|lg| reduced_residual(ctx, lg, mu_fixed), &lg0, opts)
            .map_err(|e| ControlError::Params(format!("co-design re-solve: {e}")))?;
        iterations += sub.iterations;
        converged = sub.converged;
        omega.rows_mut(0, n_lg).copy_from(&sub.solution);
        omega[n_lg] = mu_fixed;
    }
    let x = ctx.unpack(&omega);
    Ok(CoDesignSolution {
        residual_norm: if clamped {
            reduced_residual(ctx, &omega.rows(0, n_lg).into_owned(), x.mu0).norm()
        } else {
            stationarity_residual(ctx, &omega).norm()
        },
        l: x.l,
        g_next: x.g,
        mu0: x.mu0,
        clamped,
        converged,
        fallback: false,
        iterations,
    })
}

/// Inside the band: `G` and `μ̄₀` are kept and `L` is the minimum-norm
/// least-squares solution of `W L ≈ P c`.
pub fn frozen_solve(ctx: &CoDesignContext, g: &DMatrix<f64>, mu0: f64) -> CoDesignSolution {
    let w = ctx.w(g);
    let rhs = ctx.p() * ctx.c(mu0);
    let l = linalg::lstsq(&w, &rhs);
    let omega = ctx.pack(&l, g, mu0);
    CoDesignSolution {
        residual_norm: stationarity_residual(ctx, &omega).rows(0, ctx.window()).norm(),
        l,
        g_next: g.clone(),
        mu0,
        clamped: false,
        converged: true,
        fallback: false,
        iterations: 0,
    }
}

/// `δx(k) = x(k) − 𝒳(k−1)L` and `δu(k) = u(k) − 𝒰(k−1)L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPair {
    pub delta_x: DVector<f64>,
    pub delta_u: DVector<f64>,
}

/// Input-mapping law:
/// `u = 𝒰(k−1)L − B₁⁻¹[μ̄₀s + ξT sgn s − s + ϖ̂ + Ḡ𝒳(k)L + ḠAδx]`
/// with `Ḡ = Ḡ(k+1)`.
#[allow(clippy::too_many_arguments)]
pub fn imsmc_control(
    rf: &RegularForm,
    history: &HistoryBuffer,
    x: &DVector<f64>,
    s: &DVector<f64>,
    l: &DVector<f64>,
    gain_next: &SurfaceGain,
    mu0: f64,
    xi_t: f64,
    varpi_hat: &DVector<f64>,
) -> (DVector<f64>, ResidualPair) {
    let delta_x = x - history.x_hist() * l;
    let model = &gain_next.g_bar * (history.x_next() * l) + &gain_next.g_bar * (&rf.a * &delta_x);
    let delta_u = -(rf.b1_inv() * (reaching_bracket(mu0, s, xi_t, varpi_hat) + model));
    let u = history.u_hist() * l + &delta_u;
    (u, ResidualPair { delta_x, delta_u })
}

/// Settings for [`ImsmcController`].
#[derive(Debug, Clone, PartialEq)]
pub struct ImsmcSettings {
    pub params: ReachingParams,
    /// Window length `N`.
    pub window: usize,
    pub g_init: SurfaceGain,
    pub compensator: CompensatorMode,
    pub lm: LmOptions,
}

/// Everything produced at one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct ImsmcStep {
    pub u: DVector<f64>,
    /// `s(k) = Ḡ(k)x(k)`
    pub s: DVector<f64>,
    pub varpi_hat: DVector<f64>,
    pub solution: CoDesignSolution,
    pub residual: ResidualPair,
    pub in_band: bool,
    /// Band radius used for the decision at this step.
    pub omega: f64,
}

#[derive(Debug, Clone)]
pub struct ImsmcController {
    settings: ImsmcSettings,
    gain: SurfaceGain,
    mu0: f64,
    history: HistoryBuffer,
    compensator: CompensatorState,
    band: RunningBand,
}

impl ImsmcController {
    pub fn new(rf: &RegularForm, settings: ImsmcSettings) -> Result<Self, ControlError> {
        let (n_u, n_1) = (rf.n_u(), rf.n_1());
        if settings.g_init.g.shape() != (n_u, n_1) {
            return Err(ControlError::Dimension(format!(
                "g_init is {:?}, expected ({n_u}, {n_1})",
                settings.g_init.g.shape()
            )));
        }
        if settings.window == 0 {
            return Err(ControlError::Params("window N must be at least 1".into()));
        }
        settings
            .lm
            .validate()
            .map_err(|e| ControlError::Params(e.to_string()))?;
        let p = settings.params;
        Ok(Self {
            band: RunningBand::new(n_u, p.xi_t, p.delta_bar, p.mu0)?,
            compensator: CompensatorState::new(n_u, settings.compensator, p.mu0),
            history: HistoryBuffer::new(settings.window, rf.n_x(), n_u),
            gain: settings.g_init.clone(),
            mu0: p.mu0,
            settings,
        })
    }

    pub fn gain(&self) -> &SurfaceGain {
        &self.gain
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn history(&self) -> &HistoryBuffer {
        &self.history
    }

    pub fn compensator(&self) -> &CompensatorState {
        &self.compensator
    }

    pub fn band(&self) -> &RunningBand {
        &self.band
    }

    pub fn control(&mut self, rf: &RegularForm, x: &DVector<f64>) -> ImsmcStep {
        let xi_t = self.settings.params.xi_t;
        let s = self.gain.sliding(x);
        let varpi_hat = self.compensator.update(&s, xi_t).clone();
        let omega = self.band.band().omega;
        let ctx = CoDesignContext {
            rf,
            x_data: self.history.x_next(),
            s: s.clone(),
            varpi_hat: varpi_hat.clone(),
            xi_t,
        };
        let decision = band_policy(&s, self.band.band());
        let solution = match decision {
            BandDecision::Frozen => frozen_solve(&ctx, &self.gain.g, self.mu0),
            BandDecision::CoDesign => match co_design_solve(&ctx, self.mu0, &self.settings.lm) {
                Ok(sol) if sol.l.iter().chain(sol.g_next.iter()).all(|v| v.is_finite()) => sol,
                _ => {
                    log::warn!("co-design solve failed; keeping G and mu0");
                    CoDesignSolution {
                        fallback: true,
                        ..frozen_solve(&ctx, &self.gain.g, self.mu0)
                    }
                }
            },
        };
        self.gain = SurfaceGain::new(solution.g_next.clone());
        self.mu0 = solution.mu0;
        self.compensator.commit(self.mu0);
        self.band.observe(self.mu0);
        let (u, residual) = imsmc_control(
            rf,
            &self.history,
            x,
            &s,
            &solution.l,
            &self.gain,
            self.mu0,
            xi_t,
            &varpi_hat,
        );
        ImsmcStep {
            u,
            s,
            varpi_hat,
            solution,
            residual,
            in_band: decision == BandDecision::Frozen,
            omega,
        }
    }

    /// Records `x(k+1)` and the applied `u(k)`.
    pub fn observe(&mut self, x_next: &DVector<f64>, u: &DVector<f64>) {
        self.history.push(x_next, u);
    }
}

/// Control-law form that makes the compensated unknown term explicit:
/// `u = −B₁⁻¹[μ̄₀s + ξT sgn s − s + ḠAx + ϖ̂ + ḠΔA𝒳(k−1)L]`.
/// Equal to [`imsmc_control`] once the window holds disturbance-free data.
#[allow(clippy::too_many_arguments)]
pub fn equivalent_control(
    rf: &RegularForm,
    delta: &DMatrix<f64>,
    history: &HistoryBuffer,
    x: &DVector<f64>,
    s: &DVector<f64>,
    l: &DVector<f64>,
    gain_next: &SurfaceGain,
    mu0: f64,
    xi_t: f64,
    varpi_hat: &DVector<f64>,
) -> DVector<f64> {
    let da = rf.delta_a(delta);
    let bracket = reaching_bracket(mu0, s, xi_t, varpi_hat)
        + &gain_next.g_bar * (&rf.a * x)
        + &gain_next.g_bar * (da * (history.x_hist() * l));
    -(rf.b1_inv() * bracket)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{example_plant, step, to_regular_form, DisturbanceSchedule};
    use crate::reaching::robust_smc_control;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn settings(g: DMatrix<f64>, mu0: f64) -> ImsmcSettings {
        ImsmcSettings {
            params: ReachingParams::new(mu0, 0.01, 0.005).unwrap(),
            window: 2,
            g_init: SurfaceGain::new(g),
            compensator: CompensatorMode::OneStep,
            lm: LmOptions::default(),
        }
    }

    #[test]
    fn co_design_from_zero_solves_mu_in_closed_form() {
        let rf = to_regular_form(&example_plant(0.8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let s = DVector::from_element(1, rng.random_range(0.05..0.5));
            let varpi = DVector::from_element(1, rng.random_range(0.0..0.01));
            let ctx = CoDesignContext {
                rf: &rf,
                x_data: DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0)),
                s: s.clone(),
                varpi_hat: varpi.clone(),
                xi_t: 0.01,
            };
            let sol = co_design_solve(&ctx, 0.1, &LmOptions::default()).unwrap();
            let expected = 1.0 - (0.01 + varpi[0]) / s[0];
            assert!((sol.mu0 - expected).abs() < 1e-8, "{} vs {expected}", sol.mu0);
            assert!(!sol.clamped);
            assert_eq!(sol.l.amax(), 0.0);
            assert_eq!(sol.g_next.amax(), 0.0);
        }
    }

    #[test]
    fn negative_mu_is_saturated() {
        let rf = to_regular_form(&example_plant(0.8)).unwrap();
        // s small against a large compensator estimate drives the root below zero.
        let ctx = CoDesignContext {
            rf: &rf,
            x_data: DMatrix::zeros(3, 2),
            s: DVector::from_element(1, 0.05),
            varpi_hat: DVector::from_element(1, 0.2),
            xi_t: 0.01,
        };
        let sol = co_design_solve(&ctx, 0.1, &LmOptions::default()).unwrap();
        assert!(sol.clamped);
        assert_eq!(sol.mu0, MU0_MIN);
    }

    #[test]
    fn block_two_alone_gives_closed_form_gain() {
        // One unactuated state, L fixed: ∂J/∂G = 2aLLᵀaᵀG + 2aLc = 0 with a = 𝒳₁.
        // gives G = −c / (𝒳₁L) for scalar data.
        let a = DMatrix::from_row_slice(2, 2, &[0.1, 0.5, 0.0, 0.1]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let plant = crate::plant::Plant::new(
            a,
            b,
            DMatrix::zeros(2, 1),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let rf = to_regular_form(&plant).unwrap();
        let ctx = CoDesignContext {
            rf: &rf,
            x_data: DMatrix::from_row_slice(2, 1, &[2.0, 0.5]),
            s: DVector::from_element(1, 1.0),
            varpi_hat: DVector::zeros(1),
            xi_t: 0.01,
        };
        let l = 0.7;
        let mu0 = 0.4;
        let c = ctx.c(mu0)[0];
        let g = -c / (2.0 * l);
        let omega = ctx.pack(&DVector::from_element(1, l), &DMatrix::from_element(1, 1, g), mu0);
        let r = stationarity_residual(&ctx, &omega);
        assert!(r[1].abs() < 1e-14);
    }

    #[test]
    fn frozen_solve_keeps_gain_and_mu() {
        let rf = to_regular_form(&example_plant(0.8)).unwrap();
        let g = DMatrix::from_row_slice(1, 2, &[0.0728, 0.4562]);
        let ctx = CoDesignContext {
            rf: &rf,
            x_data: DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -1.0, 0.2, 0.3, 0.1]),
            s: DVector::from_element(1, 0.001),
            varpi_hat: DVector::zeros(1),
            xi_t: 0.01,
        };
        let sol = frozen_solve(&ctx, &g, 0.3);
        assert_eq!(sol.g_next, g);
        assert_eq!(sol.mu0, 0.3);
        // Normal equations hold.
        let w = ctx.w(&g);
        let normal = w.transpose() * (&w * &sol.l - ctx.p() * ctx.c(0.3));
        assert!(normal.amax() < 1e-12);
    }

    #[test]
    fn zero_window_law_matches_robust_law() {
        let rf = to_regular_form(&example_plant(0.8)).unwrap();
        let g = SurfaceGain::new(DMatrix::from_row_slice(1, 2, &[0.0728, 0.4562]));
        let hist = HistoryBuffer::new(2, 3, 1);
        let x = DVector::from_vec(vec![-1.0, 1.0, -5.0]);
        let s = g.sliding(&x);
        let varpi = DVector::from_element(1, 0.003);
        let params = ReachingParams::new(0.3, 0.01, 0.005).unwrap();
        let (u, _) = imsmc_control(&rf, &hist, &x, &s, &DVector::zeros(2), &g, 0.3, 0.01, &varpi);
        let u_robust = robust_smc_control(&rf, &g, &x, &varpi, &params);
        assert_eq!(u, u_robust);
    }

    #[test]
    fn equivalent_form_agrees_after_window_fills() {
        let plant = example_plant(0.8);
        let rf = to_regular_form(&plant).unwrap();
        let g0 = DMatrix::from_row_slice(1, 2, &[0.0728, 0.4562]);
        let mut ctl = ImsmcController::new(&rf, settings(g0, 0.5)).unwrap();
        let mut x = DVector::from_vec(vec![0.02, -0.01, 0.005]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 0..12 {
            let hist = ctl.history().clone();
            let st = ctl.control(&rf, &x);
            if k >= 3 {
                let l = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
                let (u, _) = imsmc_control(
                    &rf, &hist, &x, &st.s, &l, ctl.gain(), st.solution.mu0, 0.01, &st.varpi_hat,
                );
                let ue = equivalent_control(
                    &rf, &plant.delta, &hist, &x, &st.s, &l, ctl.gain(), st.solution.mu0, 0.01,
                    &st.varpi_hat,
                );
                assert!((u - ue).amax() < 1e-12, "k = {k}");
            }
            let next = step(&rf, &plant, &x, &st.u, k);
            ctl.observe(&next, &st.u);
            x = next;
        }
    }

    #[test]
    fn reaching_law_holds_with_compensated_term() {
        // s(k+1) − s(k) = −μs − ξ sgn s + ḠΔAδx − ϖ̂ for f = 0.
        let plant = example_plant(0.8)
            .with_disturbance(DisturbanceSchedule::none())
            .unwrap();
        let rf = to_regular_form(&plant).unwrap();
        let mut ctl = ImsmcController::new(&rf, settings(DMatrix::zeros(1, 2), 0.1)).unwrap();
        let mut x = DVector::from_vec(vec![-1.0, 1.0, -5.0]);
        for k in 0..20 {
            let st = ctl.control(&rf, &x);
            let next = step(&rf, &plant, &x, &st.u, k);
            let s_next = ctl.gain().sliding(&next);
            let varpi = &ctl.gain().g_bar * (rf.delta_a(&plant.delta) * &st.residual.delta_x);
            let predicted = &st.s * (1.0 - st.solution.mu0)
                - crate::reaching::sgn(&st.s) * 0.01
                + varpi
                - &st.varpi_hat;
            assert!((s_next - predicted).amax() < 1e-10, "k = {k}");
            ctl.observe(&next, &st.u);
            x = next;
        }
    }

    #[test]
    fn rejects_bad_gain_shape() {
        let rf = to_regular_form(&example_plant(0.8)).unwrap();
        assert!(ImsmcController::new(&rf, settings(DMatrix::zeros(1, 3), 0.1)).is_err());
    }
}
