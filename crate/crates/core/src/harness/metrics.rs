//! Scalar summaries of a trajectory.

use serde::Serialize;

use super::run::TrajectoryLog;
use crate::linalg::inf_norm;

pub const DEFAULT_SETTLE_FRACTION: f64 = 0.02;
pub const DEFAULT_HOLD: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// Smallest `K` with `‖x(k)‖∞ ≤ ε` on `[K, K + hold]`; `len + 1` if never.
    pub settling_time: usize,
    /// First `k` with `‖s(k)‖ ≤ Ω`.
    pub band_entry_time: Option<usize>,
    /// `max(‖s(k)‖ − Ω(k), 0)` over `k ≥ band_entry_time`.
    pub max_band_violation: f64,
    /// `Σ ‖u(k+1) − u(k)‖₁`
    pub chattering_index: f64,
    /// `max ‖ϖ̂(k) − ϖ̂(k−1)‖`
    pub compensator_increment_bound: f64,
    /// `Σ |y(k) − y_d|` when an output is logged.
    pub output_abs_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricOptions {
    /// `ε`; defaults to `0.02·‖x(0)‖∞`.
    pub epsilon: Option<f64>,
    pub hold: usize,
    pub reference: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            epsilon: None,
            hold: DEFAULT_HOLD,
            reference: 0.0,
        }
    }
}

/// The hold window is clipped at the end of the log.
pub fn settling_time(norms: &[f64], epsilon: f64, hold: usize) -> usize {
    let n = norms.len();
    // Walking backwards, `run` counts consecutive settled samples from k on.
    let mut run = 0usize;
    let mut best = n + 1;
    for k in (0..n).rev() {
        if norms[k] <= epsilon {
            run += 1;
            let needed = hold.min(n - 1 - k) + 1;
            if run >= needed {
                best = k;
            }
        } else {
            run = 0;
        }
    }
    best
}

pub fn compute_metrics(log: &TrajectoryLog, opts: &MetricOptions) -> Metrics {
    assert!(!log.is_empty(), "metrics need a non-empty log");
    let rows = &log.rows;
    let norms: Vec<f64> = rows.iter().map(|r| inf_norm(&r.x)).collect();
    let epsilon = opts
        .epsilon
        .unwrap_or(DEFAULT_SETTLE_FRACTION * norms[0]);
    let entry = rows.iter().position(|r| r.s_norm <= r.omega);
    let max_band_violation = entry.map_or(0.0, |e| {
        rows[e..]
            .iter()
            .map(|r| (r.s_norm - r.omega).max(0.0))
            .fold(0.0, f64::max)
    });
    let chattering_index = rows
        .windows(2)
        .map(|w| (&w[1].u - &w[0].u).abs().sum())
        .sum();
    let compensator_increment_bound = rows
        .windows(2)
        .map(|w| (&w[1].varpi_hat - &w[0].varpi_hat).norm())
        .fold(rows[0].varpi_hat.norm(), f64::max);
    let output_abs_error = rows[0]
        .y
        .is_some()
        .then(|| rows.iter().filter_map(|r| r.y).map(|y| (y - opts.reference).abs()).sum());
    Metrics {
        settling_time: settling_time(&norms, epsilon, opts.hold),
        band_entry_time: entry,
        max_band_violation,
        chattering_index,
        compensator_increment_bound,
        output_abs_error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::TrajectoryRow;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn row(k: usize, x: f64, u: f64) -> TrajectoryRow {
        TrajectoryRow {
            k,
            x: DVector::from_element(2, x),
            u: DVector::from_element(1, u),
            s: DVector::from_element(1, x),
            s_norm: x.abs(),
            l: DVector::zeros(2),
            g: DVector::zeros(1),
            mu0: 0.5,
            varpi_hat: DVector::zeros(1),
            residual_norm: 0.0,
            in_band: false,
            clamped: false,
            fallback: false,
            omega: 0.1,
            delta_x: DVector::from_element(2, x),
            delta_u: DVector::from_element(1, u),
            y: None,
        }
    }

    /// Brute-force definition used as the oracle.
    fn settling_oracle(norms: &[f64], eps: f64, hold: usize) -> usize {
        let n = norms.len();
        (0..n)
            .find(|&k| (k..=(k + hold).min(n - 1)).all(|j| norms[j] <= eps))
            .unwrap_or(n + 1)
    }

    #[test]
    fn zero_log() {
        let log = TrajectoryLog {
            rows: (0..10).map(|k| row(k, 0.0, if k % 2 == 0 { 1.0 } else { -1.0 })).collect(),
        };
        let m = compute_metrics(&log, &MetricOptions::default());
        assert_eq!(m.settling_time, 0);
        assert_eq!(m.chattering_index, 18.0);
        assert_eq!(m.band_entry_time, Some(0));
        assert_eq!(m.max_band_violation, 0.0);
    }

    #[test]
    fn never_settled_gives_sentinel() {
        let log = TrajectoryLog {
            rows: (0..5).map(|k| row(k, 1.0, 0.0)).collect(),
        };
        let m = compute_metrics(&log, &MetricOptions { epsilon: Some(0.5), ..Default::default() });
        assert_eq!(m.settling_time, 6);
        assert_eq!(m.band_entry_time, None);
    }

    #[test]
    fn faster_decay_settles_sooner() {
        let mk = |rate: f64| TrajectoryLog {
            rows: (0..100).map(|k| row(k, rate.powi(k as i32), 0.0)).collect(),
        };
        let fast = compute_metrics(&mk(0.5), &MetricOptions::default());
        let slow = compute_metrics(&mk(0.9), &MetricOptions::default());
        assert!(fast.settling_time < slow.settling_time);
    }

    #[test]
    fn band_violation_after_entry() {
        let mut rows: Vec<_> = (0..4).map(|k| row(k, 0.05, 0.0)).collect();
        rows[0].s_norm = 1.0;
        rows[2].s_norm = 0.3;
        let m = compute_metrics(&TrajectoryLog { rows }, &MetricOptions::default());
        assert_eq!(m.band_entry_time, Some(1));
        assert!((m.max_band_violation - 0.2).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn settling_matches_brute_force(
            norms in proptest::collection::vec(0.0f64..1.0, 1..60),
            eps in 0.0f64..1.0,
            hold in 0usize..25,
        ) {
            prop_assert_eq!(settling_time(&norms, eps, hold), settling_oracle(&norms, eps, hold));
        }
    }
}
