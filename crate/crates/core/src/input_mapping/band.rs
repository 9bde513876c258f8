//! Quasi-sliding-mode band radius and the freeze/co-design switch.

use nalgebra::DVector;

use crate::error::ControlError;

/// Band terms for a given convergence parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QsmbBand {
    /// `Ω`
    pub omega: f64,
    /// `η = (1 − μ̄₀)(√n_u ξT − δ̄)`
    pub eta: f64,
    /// `Φ̄ = (√n_u ξT + δ̄)² / (2(1 − μ̄₀)(√n_u ξT − δ̄))`
    pub phi_bar: f64,
    pub delta_bar: f64,
}

/// `(η, Φ̄, √(Φ̄² + 2ηΦ̄))` for one value of `μ̄₀`.
pub fn band_terms(
    n_u: usize,
    xi_t: f64,
    delta_bar: f64,
    mu0: f64,
) -> Result<QsmbBand, ControlError> {
    let lhs = (n_u as f64).sqrt() * xi_t;
    if !(lhs > delta_bar) {
        return Err(ControlError::BandUndefined { lhs, delta_bar });
    }
    let eta = (1.0 - mu0) * (lhs - delta_bar);
    let phi_bar = (lhs + delta_bar).powi(2) / (2.0 * eta);
    Ok(QsmbBand {
        omega: (phi_bar * phi_bar + 2.0 * eta * phi_bar).sqrt(),
        eta,
        phi_bar,
        delta_bar,
    })
}

/// Band radius as the supremum over a history of `μ̄₀` values. The other
/// fields are taken at the maximizing entry.
pub fn qsmb_omega(
    n_u: usize,
    xi_t: f64,
    delta_bar: f64,
    mu0_history: &[f64],
) -> Result<QsmbBand, ControlError> {
    let mut best: Option<QsmbBand> = None;
    for &mu in mu0_history {
        let b = band_terms(n_u, xi_t, delta_bar, mu)?;
        if best.map_or(true, |cur| b.omega > cur.omega) {
            best = Some(b);
        }
    }
    best.ok_or_else(|| ControlError::Params("empty mu0 history".into()))
}

/// Running supremum of the band radius along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningBand {
    n_u: usize,
    xi_t: f64,
    delta_bar: f64,
    current: QsmbBand,
}

impl RunningBand {
    pub fn new(n_u: usize, xi_t: f64, delta_bar: f64, mu0_init: f64) -> Result<Self, ControlError> {
        Ok(Self {
            n_u,
            xi_t,
            delta_bar,
            current: band_terms(n_u, xi_t, delta_bar, mu0_init)?,
        })
    }

    pub fn band(&self) -> &QsmbBand {
        &self.current
    }

    pub fn observe(&mut self, mu0: f64) {
        if let Ok(b) = band_terms(self.n_u, self.xi_t, self.delta_bar, mu0) {
            if b.omega > self.current.omega {
                self.current = b;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandDecision {
    /// Inside the band: keep `G` and `μ̄₀`, re-solve `L` only.
    Frozen,
    /// Outside the band: full co-design solve.
    CoDesign,
}

/// `‖s(k)‖ ≤ Ω` selects the frozen branch.
pub fn band_policy(s_now: &DVector<f64>, band: &QsmbBand) -> BandDecision {
    if s_now.norm() <= band.omega {
        BandDecision::Frozen
    } else {
        BandDecision::CoDesign
    }
}
