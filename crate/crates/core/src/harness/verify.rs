//! Invariant suite run by `verify`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ControllerKind, ExperimentConfig, ExperimentSetup};
use super::metrics::{compute_metrics, MetricOptions};
use super::run::{initial_gain, run_setup, TrajectoryLog};
use crate::error::HarnessError;
use crate::input_mapping::{
    band_terms, objective_j, stationarity_residual, CoDesignContext, MU0_MAX, MU0_MIN,
};
use crate::nlsolve::{fd_jacobian, levenberg_marquardt, LmOptions};
use crate::plant::{step, DisturbanceSchedule};
use crate::reaching::{sgn, CompensatorMode, CompensatorState};
use crate::surface::{certify_gain, default_delta_grid, verify_quadratic_stability, LmiOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
    /// Per-context discrepancy between `∂J/∂G` by finite differences and the
    /// closed-form block.
    pub gradient_g_log: Vec<f64>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, module: &'static str, name: &'static str, passed: bool, detail: String) {
        self.checks.push(CheckOutcome {
            module,
            name,
            passed,
            detail,
        });
    }
}

pub const GRADIENT_CONTEXTS: usize = 100;
pub const GRADIENT_TOL: f64 = 1e-6;
pub const PREDICTION_TOL: f64 = 1e-9;
pub const BAND_TOL: f64 = 1e-6;
pub const REACHING_TOL: f64 = 1e-10;

/// `col(x(k−1), …, x(k−N))` as held by the controller at step `k`; `x(0)` and
/// earlier slots are zero.
pub fn window_before(log: &TrajectoryLog, k: usize, n: usize) -> DMatrix<f64> {
    let n_x = log.rows[0].x.len();
    let mut m = DMatrix::zeros(n_x, n);
    for j in 0..n {
        let idx = k as isize - 1 - j as isize;
        if idx >= 1 {
            m.set_column(j, &log.rows[idx as usize].x);
        }
    }
    m
}

/// Largest `‖x(k) − 𝒳(k−1)L(k) − δx(k)‖∞` over the log.
pub fn decomposition_error(log: &TrajectoryLog, window: usize) -> f64 {
    log.rows
        .iter()
        .map(|r| (&r.x - window_before(log, r.k, window) * &r.l - &r.delta_x).amax())
        .fold(0.0, f64::max)
}

/// Largest `‖x(k+1) − 𝒳(k)L − (A+ΔA)δx − Bδu‖∞` for `k ≥ N+1`.
pub fn prediction_error(setup: &ExperimentSetup, log: &TrajectoryLog) -> f64 {
    let rf = &setup.rf;
    let a_true = &rf.a + rf.delta_a(&setup.plant.delta);
    let n = setup.window;
    let mut worst = 0.0f64;
    for k in (n + 1)..log.len().saturating_sub(1) {
        let r = &log.rows[k];
        let lhs = &log.rows[k + 1].x - window_before(log, k + 1, n) * &r.l;
        let rhs = &a_true * &r.delta_x + &rf.b * &r.delta_u;
        worst = worst.max((lhs - rhs).amax());
    }
    worst
}

/// `e(k) = s(k+1) − (1−μ̄₀)s(k) + ξT sgn s(k)`, the realized deviation
/// from the ideal reaching step.
fn realized_increment(log: &TrajectoryLog, k: usize, xi_t: f64) -> DVector<f64> {
    let r = &log.rows[k];
    &log.rows[k + 1].s - &r.s * (1.0 - r.mu0) + sgn(&r.s) * xi_t
}

/// Counts steps where `‖s(k)‖ > Φ̄` (with the realized increment in place of
/// `δ̄`) and returns the ones where `V` failed to decrease.
fn lyapunov_failures(
    log: &TrajectoryLog,
    n_u: usize,
    xi_t: f64,
    only_out_of_band: bool,
) -> (usize, Vec<usize>) {
    let lhs = (n_u as f64).sqrt() * xi_t;
    let mut applicable = 0;
    let mut failures = Vec::new();
    for k in 0..log.len().saturating_sub(1) {
        let r = &log.rows[k];
        if only_out_of_band && r.in_band {
            continue;
        }
        let delta = realized_increment(log, k, xi_t).norm();
        if delta >= lhs {
            continue;
        }
        let Ok(b) = band_terms(n_u, xi_t, delta, r.mu0) else { continue };
        if r.s_norm > b.phi_bar {
            applicable += 1;
            let v_now = 0.5 * r.s.norm_squared();
            let v_next = 0.5 * log.rows[k + 1].s.norm_squared();
            if !(v_next < v_now) {
                failures.push(k);
            }
        }
    }
    (applicable, failures)
}

fn undisturbed(setup: &ExperimentSetup) -> Result<ExperimentSetup, HarnessError> {
    let mut s = setup.clone();
    s.plant = s.plant.with_disturbance(DisturbanceSchedule::none())?;
    Ok(s)
}

fn check_plant(setup: &ExperimentSetup, rng: &mut ChaCha8Rng, report: &mut VerifyReport) -> Result<(), HarnessError> {
    let rf = &setup.rf;
    let plain = undisturbed(setup)?;
    let (n, m) = (rf.n_x(), rf.n_u());
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let x1 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let x2 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let u1 = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let u2 = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let lhs = step(rf, &plain.plant, &(&x1 * a + &x2 * b), &(&u1 * a + &u2 * b), 0);
        let rhs = step(rf, &plain.plant, &x1, &u1, 0) * a + step(rf, &plain.plant, &x2, &u2, 0) * b;
        worst = worst.max((lhs - rhs).amax());
    }
    report.push("plant", "superposition", worst < 1e-12, format!("max error {worst:.3e}"));
    let top = rf.b.rows(0, rf.n_1()).amax();
    report.push("plant", "regular_form_zero_block", top == 0.0, format!("max |top block| {top:e}"));
    let rt = (&rf.t_c_inv * &rf.t_c - DMatrix::identity(n, n)).amax();
    report.push("plant", "transform_round_trip", rt < 1e-12, format!("max error {rt:.3e}"));
    Ok(())
}

fn check_surface(setup: &ExperimentSetup, report: &mut VerifyReport) -> Result<(), HarnessError> {
    let rf = &setup.rf;
    let gain = initial_gain(setup)?;
    let gb = &gain.g_bar * &rf.b == rf.b.rows(rf.n_1(), rf.n_u());
    report.push("surface", "g_bar_b_equals_b1", gb, String::new());
    match certify_gain(rf, &gain, &LmiOptions::default()) {
        Ok(_) => {
            let grid = default_delta_grid(rf, 21, setup.seed);
            let st = verify_quadratic_stability(rf, &gain, &grid);
            report.push(
                "surface",
                "certified_gain_is_stable",
                st.stable,
                format!("max spectral radius {:.6} over {} samples", st.max_radius, grid.len()),
            );
        }
        Err(e) => report.push(
            "surface",
            "certified_gain_is_stable",
            true,
            format!("gain not certified ({e}); nothing to check"),
        ),
    }
    Ok(())
}

fn check_reaching(setup: &ExperimentSetup, report: &mut VerifyReport) -> Result<(), HarnessError> {
    let n_u = setup.rf.n_u();
    let xi = setup.params.xi_t;
    let mu = setup.params.mu0;

    // Nominal identity: Δ = 0, f ≡ 0, compensator off.
    let mut nominal = undisturbed(setup)?;
    nominal.plant = nominal
        .plant
        .with_delta(DMatrix::zeros(nominal.plant.delta.nrows(), nominal.plant.delta.ncols()))?;
    nominal.compensator = CompensatorMode::Off;
    nominal.horizon = 101;
    let log = run_setup(&nominal, ControllerKind::Robust)?;
    let worst = (0..100)
        .map(|k| {
            let s = &log.rows[k].s;
            (&log.rows[k + 1].s - (s * (1.0 - mu) - sgn(s) * xi)).amax()
        })
        .fold(0.0, f64::max);
    report.push("reaching", "nominal_reaching_identity", worst < REACHING_TOL, format!("max error {worst:.3e} over 100 steps"));

    // Band approach under the configured uncertainty.
    let plain = undisturbed(setup)?;
    let log = run_setup(&plain, ControllerKind::Robust)?;
    let delta_hat = compute_metrics(&log, &MetricOptions::default()).compensator_increment_bound;
    let (applicable, failures) = lyapunov_failures(&log, n_u, xi, false);
    report.push(
        "reaching",
        "monotone_band_approach",
        failures.is_empty(),
        format!(
            "{applicable} steps outside the band estimate, failures at {failures:?}; logged delta_hat {delta_hat:.3e} vs sqrt(n_u)*xi_t {:.3e}",
            (n_u as f64).sqrt() * xi
        ),
    );

    // Compensator modes on constant sliding sequences.
    let mut worst = 0.0f64;
    for c in [-2.0, -0.3, 0.0, 0.7, 4.0] {
        let s = DVector::from_element(n_u, c);
        let mut a = CompensatorState::new(n_u, CompensatorMode::OneStep, mu);
        let mut b = CompensatorState::new(n_u, CompensatorMode::LiteralSum, mu);
        for _ in 0..25 {
            let va = a.update(&s, xi).clone();
            let vb = b.update(&s, xi).clone();
            a.commit(mu);
            b.commit(mu);
            worst = worst.max((va - vb).amax());
        }
    }
    report.push("reaching", "compensator_mode_equivalence", worst < 1e-12, format!("max difference {worst:.3e}"));
    Ok(())
}

pub const SURFACE_START_SCALE: f64 = 1e-2;
/// `J` is quadratic along each coordinate, so a large step only cuts rounding error.
pub const GRADIENT_FD_STEP: f64 = 1e-3;

fn surface_start(setup: &ExperimentSetup) -> Result<ExperimentSetup, HarnessError> {
    let mut s = undisturbed(setup)?;
    let g = initial_gain(setup)?;
    s.g_init = Some(g.clone());
    let n_1 = s.rf.n_1();
    // Small enough that the state never leaves the initial band, so `G` stays
    // frozen and the window solve returns a non-zero `L`.
    let x1 = s.x0.rows(0, n_1).into_owned() * SURFACE_START_SCALE;
    let x2 = -(&g.g * &x1);
    s.x0.rows_mut(0, n_1).copy_from(&x1);
    s.x0.rows_mut(n_1, s.rf.n_u()).copy_from(&x2);
    Ok(s)
}

fn check_input_mapping(
    setup: &ExperimentSetup,
    rng: &mut ChaCha8Rng,
    report: &mut VerifyReport,
) -> Result<(), HarnessError> {
    let rf = &setup.rf;
    let n_u = rf.n_u();
    let xi = setup.params.xi_t;
    let plain = undisturbed(setup)?;
    let on_surface = surface_start(setup)?;
    let runs = [
        ("configured start", run_setup(&plain, ControllerKind::Imsmc)?, &plain),
        ("surface start", run_setup(&on_surface, ControllerKind::Imsmc)?, &on_surface),
    ];

    let mut detail = Vec::new();
    let mut ok = true;
    for (name, log, _) in &runs {
        let e = decomposition_error(log, setup.window);
        let scale = log.rows.iter().map(|r| r.x.amax()).fold(1.0, f64::max);
        ok &= e <= 1e-12 * scale;
        detail.push(format!("{name}: {e:.3e}"));
    }
    report.push("input_mapping", "decomposition_identity", ok, detail.join(", "));

    let mut detail = Vec::new();
    let mut ok = true;
    for (name, log, s) in &runs {
        let e = prediction_error(s, log);
        let max_l = log.rows.iter().map(|r| r.l.amax()).fold(0.0, f64::max);
        ok &= e < PREDICTION_TOL;
        detail.push(format!("{name}: {e:.3e} (max |L| {max_l:.3e})"));
    }
    report.push("input_mapping", "prediction_identity", ok, detail.join(", "));

    let (worst_l, worst_mu, g_log) = gradient_check(setup, rng);
    report.push(
        "input_mapping",
        "stationarity_gradient",
        worst_l < GRADIENT_TOL && worst_mu < GRADIENT_TOL,
        format!(
            "{GRADIENT_CONTEXTS} contexts; max relative error L block {worst_l:.3e}, mu block {worst_mu:.3e}; G block max {:.3e} (logged)",
            g_log.iter().cloned().fold(0.0, f64::max)
        ),
    );
    for (i, d) in g_log.iter().enumerate() {
        log::debug!("gradient G block context {i}: relative discrepancy {d:.3e}");
    }
    report.gradient_g_log = g_log;

    let (_, log, _) = &runs[0];
    let metrics = compute_metrics(log, &MetricOptions::default());
    let lhs = (n_u as f64).sqrt() * xi;
    let violation = metrics.max_band_violation;
    report.push(
        "input_mapping",
        "band_invariance",
        metrics.band_entry_time.is_some() && violation <= BAND_TOL,
        format!(
            "entry at {:?}, max violation {violation:.3e}; logged delta_hat {:.3e} vs sqrt(n_u)*xi_t {lhs:.3e}{}",
            metrics.band_entry_time,
            metrics.compensator_increment_bound,
            if metrics.compensator_increment_bound < lhs { "" } else { " (proviso not met)" }
        ),
    );

    let mut detail = Vec::new();
    let mut ok = true;
    for (name, log, _) in &runs {
        let (applicable, failures) = lyapunov_failures(log, n_u, xi, true);
        ok &= failures.is_empty();
        detail.push(format!("{name}: {applicable} applicable out-of-band steps, failures at {failures:?}"));
    }
    report.push("input_mapping", "lyapunov_decrement", ok, detail.join("; "));

    let bad: Vec<usize> = runs
        .iter()
        .flat_map(|(_, log, _)| log.rows.iter())
        .filter(|r| !(MU0_MIN..=MU0_MAX).contains(&r.mu0))
        .map(|r| r.k)
        .collect();
    report.push("input_mapping", "clamp_invariant", bad.is_empty(), format!("violations at {bad:?}"));

    let unresolved: Vec<usize> = log
        .rows
        .iter()
        .filter(|r| !r.in_band && !(r.residual_norm < 1e-8 || r.clamped || r.fallback))
        .map(|r| r.k)
        .collect();
    report.push("input_mapping", "co_design_residual", unresolved.is_empty(), format!("unflagged residuals at {unresolved:?}"));
    Ok(())
}

/// Relative block errors `(L, μ̄₀, G)`; the `G` entries are per context.
pub fn gradient_check(setup: &ExperimentSetup, rng: &mut ChaCha8Rng) -> (f64, f64, Vec<f64>) {
    let rf = &setup.rf;
    let (n, n_x, n_u) = (setup.window, rf.n_x(), rf.n_u());
    let mut worst_l = 0.0f64;
    let mut worst_mu = 0.0f64;
    let mut g_log = Vec::with_capacity(GRADIENT_CONTEXTS);
    let rel = |a: &DVector<f64>, b: &DVector<f64>| (a - b).norm() / a.norm().max(b.norm()).max(1e-12);
    for _ in 0..GRADIENT_CONTEXTS {
        let ctx = CoDesignContext {
            rf,
            x_data: DMatrix::from_fn(n_x, n, |_, _| rng.random_range(-2.0..2.0)),
            s: DVector::from_fn(n_u, |_, _| rng.random_range(-1.0..1.0)),
            varpi_hat: DVector::from_fn(n_u, |_, _| rng.random_range(-0.1..0.1)),
            xi_t: setup.params.xi_t,
        };
        let omega = DVector::from_fn(ctx.n_unknowns(), |_, _| rng.random_range(-1.0..1.0));
        let j = |w: &DVector<f64>| {
            let u = ctx.unpack(w);
            DVector::from_element(1, objective_j(&ctx, &u.l, &u.g, u.mu0))
        };
        let fd = fd_jacobian(j, &omega, GRADIENT_FD_STEP)
            .expect("objective is finite")
            .transpose()
            .column(0)
            .into_owned();
        let an = stationarity_residual(&ctx, &omega);
        let ng = ctx.n_unknowns() - n - 1;
        worst_l = worst_l.max(rel(&fd.rows(0, n).into_owned(), &an.rows(0, n).into_owned()));
        worst_mu = worst_mu.max(rel(&fd.rows(n + ng, 1).into_owned(), &an.rows(n + ng, 1).into_owned()));
        g_log.push(rel(&fd.rows(n, ng).into_owned(), &an.rows(n, ng).into_owned()));
    }
    (worst_l, worst_mu, g_log)
}

fn check_nlsolve(rng: &mut ChaCha8Rng, report: &mut VerifyReport) {
    let opts = LmOptions::default();
    let rosen = |x: &DVector<f64>| DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]);
    let mut monotone = true;
    let mut deterministic = true;
    let mut scale_err = 0.0f64;
    for _ in 0..10 {
        let x0 = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
        let a = levenberg_marquardt(rosen, &x0, &opts).expect("finite residual");
        let b = levenberg_marquardt(rosen, &x0, &opts).expect("finite residual");
        monotone &= a.accepted_norms.windows(2).all(|w| w[1] <= w[0]);
        deterministic &= a.solution.iter().zip(b.solution.iter()).all(|(p, q)| p.to_bits() == q.to_bits())
            && a.damping_trace == b.damping_trace;
        let scaled = levenberg_marquardt(|x: &DVector<f64>| rosen(x) * 10.0, &x0, &opts).expect("finite residual");
        scale_err = scale_err.max((&scaled.solution - &a.solution).amax());
    }
    report.push("nlsolve", "accepted_step_monotonicity", monotone, String::new());
    report.push("nlsolve", "determinism", deterministic, String::new());
    report.push("nlsolve", "scale_sanity", scale_err < 1e-6, format!("max solution gap {scale_err:.3e}"));
}

/// Runs every invariant check against the configured plant and controller.
pub fn verify(cfg: &ExperimentConfig) -> Result<VerifyReport, HarnessError> {
    let setup = cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let mut report = VerifyReport::default();
    check_plant(&setup, &mut rng, &mut report)?;
    check_surface(&setup, &mut report)?;
    check_reaching(&setup, &mut report)?;
    check_input_mapping(&setup, &mut rng, &mut report)?;
    check_nlsolve(&mut rng, &mut report);
    Ok(report)
}
