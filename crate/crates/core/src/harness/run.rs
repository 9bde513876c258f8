//! Closed-loop simulation.

use nalgebra::DVector;

use super::config::{ControllerKind, ExperimentConfig, ExperimentSetup};
use crate::error::HarnessError;
use crate::input_mapping::{band_terms, ImsmcController, ImsmcSettings};
use crate::plant::{step, RegularForm};
use crate::reaching::RobustSmc;
use crate::surface::{design_g_lmi, LmiOptions, SurfaceGain};

/// One logged step. Vectors are in regular-form coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub k: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub s: DVector<f64>,
    pub s_norm: f64,
    /// `L(k)`, zero for the robust controller.
    pub l: DVector<f64>,
    /// `G(k+1)` flattened column by column.
    pub g: DVector<f64>,
    pub mu0: f64,
    pub varpi_hat: DVector<f64>,
    pub residual_norm: f64,
    pub in_band: bool,
    pub clamped: bool,
    pub fallback: bool,
    /// Band radius used at this step.
    pub omega: f64,
    pub delta_x: DVector<f64>,
    pub delta_u: DVector<f64>,
    /// `y(k)` when an output row is configured.
    pub y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub rows: Vec<TrajectoryRow>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// What a controller reports for one step, before the plant moves.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlRecord {
    pub u: DVector<f64>,
    pub s: DVector<f64>,
    pub l: DVector<f64>,
    pub g: DVector<f64>,
    pub mu0: f64,
    pub varpi_hat: DVector<f64>,
    pub residual_norm: f64,
    pub in_band: bool,
    pub clamped: bool,
    pub fallback: bool,
    pub omega: f64,
    pub delta_x: DVector<f64>,
    pub delta_u: DVector<f64>,
}

pub trait Controller {
    fn act(&mut self, rf: &RegularForm, x: &DVector<f64>) -> ControlRecord;

    /// Called with `x(k+1)` and the applied `u(k)`.
    fn observe(&mut self, _x_next: &DVector<f64>, _u: &DVector<f64>) {}
}

/// Robust SMC wrapped for logging; `window` only sizes the zero `L` column.
pub struct RobustLogged {
    pub inner: RobustSmc,
    pub window: usize,
    pub omega: f64,
}

impl Controller for RobustLogged {
    fn act(&mut self, rf: &RegularForm, x: &DVector<f64>) -> ControlRecord {
        let st = self.inner.control(rf, x);
        let s_norm = st.s.norm();
        ControlRecord {
            delta_x: x.clone(),
            delta_u: st.u.clone(),
            u: st.u,
            l: DVector::zeros(self.window),
            g: DVector::from_column_slice(self.inner.gain.g.as_slice()),
            mu0: self.inner.params.mu0,
            varpi_hat: st.varpi_hat,
            residual_norm: 0.0,
            in_band: s_norm <= self.omega,
            clamped: false,
            fallback: false,
            omega: self.omega,
            s: st.s,
        }
    }
}

impl Controller for ImsmcController {
    fn act(&mut self, rf: &RegularForm, x: &DVector<f64>) -> ControlRecord {
        let st = self.control(rf, x);
        ControlRecord {
            u: st.u,
            s: st.s,
            l: st.solution.l,
            g: DVector::from_column_slice(st.solution.g_next.as_slice()),
            mu0: st.solution.mu0,
            varpi_hat: st.varpi_hat,
            residual_norm: st.solution.residual_norm,
            in_band: st.in_band,
            clamped: st.solution.clamped,
            fallback: st.solution.fallback,
            omega: st.omega,
            delta_x: st.residual.delta_x,
            delta_u: st.residual.delta_u,
        }
    }

    fn observe(&mut self, x_next: &DVector<f64>, u: &DVector<f64>) {
        ImsmcController::observe(self, x_next, u);
    }
}

/// The configured gain, or the LMI design when none is given.
pub fn initial_gain(setup: &ExperimentSetup) -> Result<SurfaceGain, HarnessError> {
    match &setup.g_init {
        Some(g) => Ok(g.clone()),
        None => Ok(design_g_lmi(&setup.rf, &LmiOptions::default())?.surface()),
    }
}

pub fn build_controller(
    setup: &ExperimentSetup,
    kind: ControllerKind,
) -> Result<Box<dyn Controller + Send>, HarnessError> {
    let gain = initial_gain(setup)?;
    Ok(match kind {
        ControllerKind::Robust => {
            let p = setup.params;
            let omega = band_terms(setup.rf.n_u(), p.xi_t, p.delta_bar, p.mu0)?.omega;
            Box::new(RobustLogged {
                inner: RobustSmc::new(gain, p, setup.compensator),
                window: setup.window,
                omega,
            })
        }
        ControllerKind::Imsmc => Box::new(ImsmcController::new(
            &setup.rf,
            ImsmcSettings {
                params: setup.params,
                window: setup.window,
                g_init: gain,
                compensator: setup.compensator,
                lm: setup.lm,
            },
        )?),
    })
}

/// Runs `horizon` steps with an arbitrary controller.
pub fn simulate(setup: &ExperimentSetup, controller: &mut dyn Controller) -> TrajectoryLog {
    let rf = &setup.rf;
    let mut x = setup.x0.clone();
    let mut rows = Vec::with_capacity(setup.horizon);
    for k in 0..setup.horizon {
        let mut rec = controller.act(rf, &x);
        if rec.u.iter().any(|v| !v.is_finite()) {
            log::warn!("non-finite control at k = {k}; applying zero input");
            rec.u.fill(0.0);
            rec.fallback = true;
        }
        let x_next = step(rf, &setup.plant, &x, &rec.u, k);
        controller.observe(&x_next, &rec.u);
        let y = setup.output.as_ref().map(|c| c.dot(&x));
        rows.push(TrajectoryRow {
            k,
            s_norm: rec.s.norm(),
            x,
            u: rec.u,
            s: rec.s,
            l: rec.l,
            g: rec.g,
            mu0: rec.mu0,
            varpi_hat: rec.varpi_hat,
            residual_norm: rec.residual_norm,
            in_band: rec.in_band,
            clamped: rec.clamped,
            fallback: rec.fallback,
            omega: rec.omega,
            delta_x: rec.delta_x,
            delta_u: rec.delta_u,
            y,
        });
        x = x_next;
    }
    TrajectoryLog { rows }
}

pub fn run_setup(setup: &ExperimentSetup, kind: ControllerKind) -> Result<TrajectoryLog, HarnessError> {
    let mut ctl = build_controller(setup, kind)?;
    Ok(simulate(setup, ctl.as_mut()))
}

/// Validates the configuration and runs its controller.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<TrajectoryLog, HarnessError> {
    let setup = cfg.validate()?;
    run_setup(&setup, setup.kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::example1_config;

    #[test]
    fn zero_start_stays_in_chattering_band() {
        let mut cfg = example1_config(0.0, false);
        cfg.simulation.x0 = vec![0.0; 3];
        cfg.simulation.horizon = 60;
        for kind in [ControllerKind::Robust, ControllerKind::Imsmc] {
            cfg.controller.kind = kind;
            let log = run_experiment(&cfg).unwrap();
            assert_eq!(log.len(), 60);
            for r in &log.rows {
                assert!(r.x.amax() < 0.5, "{kind:?} k={} x={}", r.k, r.x);
            }
        }
    }

    #[test]
    fn example1_logs_full_horizon() {
        let log = run_experiment(&example1_config(0.8, true)).unwrap();
        assert_eq!(log.len(), 150);
        assert!(log.rows.iter().enumerate().all(|(i, r)| r.k == i));
        assert!(log.rows.iter().all(|r| r.l.len() == 2 && r.g.len() == 2));
        assert!(log.rows.iter().any(|r| r.in_band));
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = example1_config(0.8, true);
        assert_eq!(run_experiment(&cfg).unwrap(), run_experiment(&cfg).unwrap());
    }

    #[test]
    fn output_is_logged_when_configured() {
        let mut cfg = example1_config(0.8, false);
        cfg.simulation.output = Some(vec![1.0, 1.0, 1.0]);
        let log = run_experiment(&cfg).unwrap();
        let r = &log.rows[0];
        assert_eq!(r.y, Some(r.x.sum()));
    }
}
