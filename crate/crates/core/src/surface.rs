//! Static sliding-surface design and quadratic-stability checks.
//!
//! The surface is `s = Ḡx = [G I]x`. On `s = 0` the unactuated states follow
//! `x₁(k+1) = A_g(Δ) x₁(k)` with `A_g = (A₁₁ + D̄₁ΔĒ₁) − (A₁₂ + D̄₁ΔĒ₂)G`.
//! `G` is designed from the robust quadratic-stability LMI
//!
//! ```text
//! ⎡ −R₁   R₁A₁₁ᵀ − R_gᵀA₁₂ᵀ   R₁Ē₁ᵀ − R_gᵀĒ₂ᵀ ⎤
//! ⎢  *    −R₁ + γD̄₁D̄₁ᵀ        0              ⎥ ≺ 0,   G = R_g R₁⁻¹
//! ⎣  *     *                   −γI            ⎦
//! ```

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::DesignError;
use crate::lmi::{self, AffineSym, BarrierOptions};
use crate::linalg;
use crate::plant::RegularForm;

/// Sliding gain `G` together with the row block `Ḡ = [G I]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGain {
    pub g: DMatrix<f64>,
    pub g_bar: DMatrix<f64>,
}

impl SurfaceGain {
    pub fn new(g: DMatrix<f64>) -> Self {
        let (m, n1) = g.shape();
        let mut g_bar = DMatrix::zeros(m, n1 + m);
        g_bar.view_mut((0, 0), (m, n1)).copy_from(&g);
        g_bar
            .view_mut((0, n1), (m, m))
            .copy_from(&DMatrix::identity(m, m));
        Self { g, g_bar }
    }

    pub fn zeros(n_u: usize, n_1: usize) -> Self {
        Self::new(DMatrix::zeros(n_u, n_1))
    }

    /// Sliding variable `s = Ḡx`.
    pub fn sliding(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.g_bar * x
    }

    pub fn check_dims(&self, rf: &RegularForm) -> Result<(), DesignError> {
        if self.g.shape() != (rf.n_u(), rf.n_1()) {
            return Err(DesignError::Dimension(format!(
                "G must be {}x{}, got {}x{}",
                rf.n_u(),
                rf.n_1(),
                self.g.nrows(),
                self.g.ncols()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmiOptions {
    /// Required strict margin: the LMI block must satisfy `λ_max < −margin_tol`.
    pub margin_tol: f64,
    /// Normalization bound on the multiplier, `γ < gamma_max`.
    pub gamma_max: f64,
    pub barrier: BarrierOptions,
}

impl Default for LmiOptions {
    fn default() -> Self {
        Self {
            margin_tol: 1e-7,
            gamma_max: 1e4,
            barrier: BarrierOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiSolution {
    /// `R₁ = R⁻¹ ≻ 0`
    pub r1: DMatrix<f64>,
    pub rg: DMatrix<f64>,
    pub gamma: f64,
    pub g: DMatrix<f64>,
    /// `−λ_max` of the LMI block at `(r1, rg, gamma)`.
    pub certificate: f64,
}

impl LmiSolution {
    pub fn surface(&self) -> SurfaceGain {
        SurfaceGain::new(self.g.clone())
    }
}

/// Assembles the LMI block for given decision values.
pub fn stability_block(rf: &RegularForm, r1: &DMatrix<f64>, rg: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let n1 = rf.n_1();
    let ne = rf.e_bar.nrows();
    let dim = 2 * n1 + ne;
    let m12 = r1 * rf.a11.transpose() - rg.transpose() * rf.a12.transpose();
    let m13 = r1 * rf.e_bar1.transpose() - rg.transpose() * rf.e_bar2.transpose();
    let m22 = -r1 + &rf.d_bar1 * rf.d_bar1.transpose() * gamma;

    let mut m = DMatrix::zeros(dim, dim);
    m.view_mut((0, 0), (n1, n1)).copy_from(&(-r1));
    m.view_mut((0, n1), (n1, n1)).copy_from(&m12);
    m.view_mut((n1, 0), (n1, n1)).copy_from(&m12.transpose());
    m.view_mut((0, 2 * n1), (n1, ne)).copy_from(&m13);
    m.view_mut((2 * n1, 0), (ne, n1)).copy_from(&m13.transpose());
    m.view_mut((n1, n1), (n1, n1)).copy_from(&m22);
    m.view_mut((2 * n1, 2 * n1), (ne, ne))
        .copy_from(&(DMatrix::identity(ne, ne) * -gamma));
    m
}

/// Largest eigenvalue of the LMI block; negative means feasible.
pub fn stability_block_max_eigenvalue(rf: &RegularForm, sol: &LmiSolution) -> f64 {
    linalg::max_sym_eigenvalue(&stability_block(rf, &sol.r1, &sol.rg, sol.gamma))
}

fn check_certificate(
    rf: &RegularForm,
    r1: DMatrix<f64>,
    rg: DMatrix<f64>,
    gamma: f64,
    opts: &LmiOptions,
) -> Result<LmiSolution, DesignError> {
    let max_eig = linalg::max_sym_eigenvalue(&stability_block(rf, &r1, &rg, gamma));
    let r1_ok = linalg::min_sym_eigenvalue(&r1) > 0.0;
    if !(max_eig < -opts.margin_tol && r1_ok && gamma > 0.0) {
        return Err(DesignError::Infeasible {
            best_max_eig: max_eig,
            required: -opts.margin_tol,
        });
    }
    let r1_inv = r1
        .clone()
        .try_inverse()
        .ok_or(DesignError::Infeasible {
            best_max_eig: max_eig,
            required: -opts.margin_tol,
        })?;
    let g = &rg * r1_inv;
    Ok(LmiSolution {
        r1,
        rg,
        gamma,
        g,
        certificate: -max_eig,
    })
}

fn side_constraints(
    n_vars: usize,
    n1: usize,
    r1_of: impl Fn(&DVector<f64>) -> DMatrix<f64> + Copy,
    gamma_of: impl Fn(&DVector<f64>) -> f64 + Copy,
    gamma_max: f64,
) -> Vec<AffineSym> {
    vec![
        AffineSym::from_map(n_vars, r1_of),
        AffineSym::from_map(n_vars, move |z| DMatrix::identity(n1, n1) - r1_of(z)),
        AffineSym::from_map(n_vars, move |z| DMatrix::from_element(1, 1, gamma_of(z))),
        AffineSym::from_map(n_vars, move |z| {
            DMatrix::from_element(1, 1, gamma_max - gamma_of(z))
        }),
    ]
}

/// Designs `G` by solving the robust LMI. The returned point is re-checked by
/// an eigenvalue computation on the assembled block.
pub fn design_g_lmi(rf: &RegularForm, opts: &LmiOptions) -> Result<LmiSolution, DesignError> {
    let n1 = rf.n_1();
    let m = rf.n_u();
    if n1 == 0 {
        return Err(DesignError::NoUnactuatedStates);
    }
    let n_sym = n1 * (n1 + 1) / 2;
    let n_vars = n_sym + m * n1 + 1;

    let r1_of = move |z: &DVector<f64>| lmi::sym_from_vech(&z.as_slice()[..n_sym], n1);
    let rg_of = move |z: &DVector<f64>| {
        DMatrix::from_column_slice(m, n1, &z.as_slice()[n_sym..n_sym + m * n1])
    };
    let gamma_of = move |z: &DVector<f64>| z[n_vars - 1];

    let objective =
        AffineSym::from_map(n_vars, |z| stability_block(rf, &r1_of(z), &rg_of(z), gamma_of(z)));
    let constraints = side_constraints(n_vars, n1, r1_of, gamma_of, opts.gamma_max);

    let mut z0 = DVector::zeros(n_vars);
    z0.rows_mut(0, n_sym)
        .copy_from_slice(&lmi::vech(&(DMatrix::identity(n1, n1) * 0.5)));
    z0[n_vars - 1] = 1.0;

    let res = lmi::minimize_max_eigenvalue(&objective, &constraints, &z0, &opts.barrier)
        .map_err(|_| DesignError::Infeasible {
            best_max_eig: f64::INFINITY,
            required: -opts.margin_tol,
        })?;
    check_certificate(rf, r1_of(&res.z), rg_of(&res.z), gamma_of(&res.z), opts)
}

/// Searches for `R₁ ≻ 0`, `γ > 0` certifying a given `G` through the same
/// LMI with `R_g = G R₁`.
pub fn certify_gain(
    rf: &RegularForm,
    gain: &SurfaceGain,
    opts: &LmiOptions,
) -> Result<LmiSolution, DesignError> {
    gain.check_dims(rf)?;
    let n1 = rf.n_1();
    if n1 == 0 {
        return Err(DesignError::NoUnactuatedStates);
    }
    let n_sym = n1 * (n1 + 1) / 2;
    let n_vars = n_sym + 1;
    let g = gain.g.clone();

    let r1_of = move |z: &DVector<f64>| lmi::sym_from_vech(&z.as_slice()[..n_sym], n1);
    let gamma_of = move |z: &DVector<f64>| z[n_vars - 1];
    let objective = AffineSym::from_map(n_vars, |z| {
        let r1 = r1_of(z);
        let rg = &g * &r1;
        stability_block(rf, &r1, &rg, gamma_of(z))
    });
    let constraints = side_constraints(n_vars, n1, r1_of, gamma_of, opts.gamma_max);

    let mut z0 = DVector::zeros(n_vars);
    z0.rows_mut(0, n_sym)
        .copy_from_slice(&lmi::vech(&(DMatrix::identity(n1, n1) * 0.5)));
    z0[n_vars - 1] = 1.0;

    let res = lmi::minimize_max_eigenvalue(&objective, &constraints, &z0, &opts.barrier)
        .map_err(|_| DesignError::Infeasible {
            best_max_eig: f64::INFINITY,
            required: -opts.margin_tol,
        })?;
    let r1 = r1_of(&res.z);
    let rg = &gain.g * &r1;
    let mut sol = check_certificate(rf, r1, rg, gamma_of(&res.z), opts)?;
    // Report the gain exactly as supplied rather than R_g R₁⁻¹ with rounding.
    sol.g = gain.g.clone();
    Ok(sol)
}

/// Sliding-mode dynamics matrix for one uncertainty sample.
pub fn smd_matrix(rf: &RegularForm, g: &DMatrix<f64>, delta: &DMatrix<f64>) -> DMatrix<f64> {
    let a11 = &rf.a11 + &rf.d_bar1 * delta * &rf.e_bar1;
    let a12 = &rf.a12 + &rf.d_bar1 * delta * &rf.e_bar2;
    a11 - a12 * g
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Spectral radius per grid sample, in grid order.
    pub radii: Vec<f64>,
    pub max_radius: f64,
    pub stable: bool,
}

/// Spectral radius of the sliding-mode dynamics at every sample of `grid`.
pub fn verify_quadratic_stability(
    rf: &RegularForm,
    gain: &SurfaceGain,
    grid: &[DMatrix<f64>],
) -> StabilityReport {
    assert!(!grid.is_empty(), "uncertainty grid must be non-empty");
    let radii: Vec<f64> = grid
        .iter()
        .map(|d| linalg::spectral_radius(&smd_matrix(rf, &gain.g, d)))
        .collect();
    let max_radius = radii.iter().cloned().fold(0.0, f64::max);
    StabilityReport {
        stable: radii.iter().all(|r| *r < 1.0),
        radii,
        max_radius,
    }
}

/// Default uncertainty grid: `samples` uniform scalars on `[−1, 1]`; for
/// matrix `Δ` each scalar multiplies seeded random unit-norm directions.
/// Plants without uncertainty get the single sample `Δ = 0`.
pub fn default_delta_grid(rf: &RegularForm, samples: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let nd = rf.d_bar.ncols();
    let ne = rf.e_bar.nrows();
    if nd == 0 || ne == 0 || rf.d_bar.amax() == 0.0 || rf.e_bar.amax() == 0.0 {
        return vec![DMatrix::zeros(nd, ne)];
    }
    let scalars: Vec<f64> = (0..samples)
        .map(|i| {
            if samples == 1 {
                0.0
            } else {
                -1.0 + 2.0 * i as f64 / (samples - 1) as f64
            }
        })
        .collect();
    if nd == 1 && ne == 1 {
        return scalars
            .into_iter()
            .map(|s| DMatrix::from_element(1, 1, s))
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let directions: Vec<DMatrix<f64>> = (0..4)
        .map(|_| {
            let m = DMatrix::from_fn(nd, ne, |_, _| rng.random_range(-1.0..1.0));
            let n = linalg::spectral_norm(&m).max(f64::MIN_POSITIVE);
            m / n
        })
        .collect();
    let mut grid = Vec::with_capacity(scalars.len() * directions.len());
    for s in &scalars {
        for d in &directions {
            grid.push(d * *s);
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{example_plant, to_regular_form, Plant};

    fn example_rf() -> RegularForm {
        to_regular_form(&example_plant(0.8)).unwrap()
    }

    fn published() -> SurfaceGain {
        SurfaceGain::new(DMatrix::from_row_slice(1, 2, &[0.0728, 0.4562]))
    }

    #[test]
    fn g_bar_times_b_is_b1() {
        let rf = example_rf();
        for g in [[0.0, 0.0], [0.0728, 0.4562], [-3.0, 100.0]] {
            let gain = SurfaceGain::new(DMatrix::from_row_slice(1, 2, &g));
            assert_eq!(&gain.g_bar * &rf.b, rf.b1);
        }
    }

    #[test]
    fn design_returns_certified_stabilizing_gain() {
        let rf = example_rf();
        let sol = design_g_lmi(&rf, &LmiOptions::default()).unwrap();
        assert!(sol.certificate > 1e-7);
        assert!(stability_block_max_eigenvalue(&rf, &sol) < -1e-7);
        let grid = default_delta_grid(&rf, 21, 0);
        assert!(verify_quadratic_stability(&rf, &sol.surface(), &grid).stable);
        let rebuilt = &sol.rg * sol.r1.clone().try_inverse().unwrap();
        assert!((rebuilt - &sol.g).amax() < 1e-12);
    }

    #[test]
    fn published_gain_admits_certificate() {
        let rf = example_rf();
        let sol = certify_gain(&rf, &published(), &LmiOptions::default()).unwrap();
        assert!(sol.certificate > 1e-7);
        assert!(stability_block_max_eigenvalue(&rf, &sol) < -1e-7);
    }

    #[test]
    fn uncertainty_free_lyapunov_case_is_feasible() {
        let p = example_plant(0.0);
        let p = Plant {
            d: DMatrix::zeros(3, 1),
            e: DMatrix::zeros(1, 3),
            ..p
        };
        let rf = to_regular_form(&p).unwrap();
        let sol = design_g_lmi(&rf, &LmiOptions::default()).unwrap();
        assert!(sol.certificate > 1e-7);
        let grid = default_delta_grid(&rf, 21, 0);
        assert_eq!(grid.len(), 1);
        let report = verify_quadratic_stability(&rf, &sol.surface(), &grid);
        assert!(report.stable);
    }

    #[test]
    fn published_gain_is_stable_on_grid() {
        let rf = example_rf();
        let grid = default_delta_grid(&rf, 21, 0);
        assert_eq!(grid.len(), 21);
        let report = verify_quadratic_stability(&rf, &published(), &grid);
        assert!(report.stable, "max radius {}", report.max_radius);
        assert_eq!(report.radii.len(), 21);
    }

    #[test]
    fn huge_gain_is_unstable() {
        let rf = example_rf();
        let grid = default_delta_grid(&rf, 21, 0);
        let g = SurfaceGain::new(DMatrix::from_row_slice(1, 2, &[1e6, 1e6]));
        assert!(!verify_quadratic_stability(&rf, &g, &grid).stable);
    }

    #[test]
    fn zero_uncertainty_report_is_plain_spectral_radius() {
        let rf = example_rf();
        let g = published();
        let report = verify_quadratic_stability(&rf, &g, &[DMatrix::zeros(1, 1)]);
        let plain = linalg::spectral_radius(&(&rf.a11 - &rf.a12 * &g.g));
        assert_eq!(report.max_radius, plain);
    }

    #[test]
    fn fully_actuated_plant_has_nothing_to_design() {
        let p = Plant::new(
            DMatrix::identity(2, 2) * 0.5,
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let rf = to_regular_form(&p).unwrap();
        assert_eq!(
            design_g_lmi(&rf, &LmiOptions::default()).unwrap_err(),
            DesignError::NoUnactuatedStates
        );
    }

    #[test]
    fn matrix_uncertainty_grid_has_unit_norm_directions() {
        let mut p = example_plant(0.0);
        p.d = DMatrix::from_row_slice(3, 2, &[0.2, 0.0, 0.1, 0.1, 0.2, 0.0]);
        p.e = DMatrix::from_row_slice(2, 3, &[0.5, 0.2, 0.1, 0.0, 0.1, 0.0]);
        p.delta = DMatrix::zeros(2, 2);
        let rf = to_regular_form(&p).unwrap();
        let grid = default_delta_grid(&rf, 21, 3);
        assert_eq!(grid.len(), 84);
        let max_norm = grid.iter().map(linalg::spectral_norm).fold(0.0, f64::max);
        assert!((max_norm - 1.0).abs() < 1e-12);
    }
}
