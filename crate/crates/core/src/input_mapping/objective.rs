//! Co-design objective and its stationarity system.
//!
//! With `P = B(Ḡ(k+1)B)⁻¹` and `c(μ̄₀) = μ̄₀s + ξT·sgn s − s + ϖ̂(k−1)`:
//!
//! ```text
//! J(L, G, μ̄₀) = ‖W L − P c‖²,   W = 𝒳(k) − P Ḡ(k+1) 𝒳(k)
//! ```
//!
//! The stationarity residual stacks the three derivative blocks
//! `(∂J/∂L, ∂J/∂G, ∂J/∂μ̄₀)`, each evaluated in the closed form used by the
//! co-design law. The unknowns are packed as
//! `ω = col(L, G⁽¹⁾, …, G⁽ⁿ¹⁾, μ̄₀)` with `G⁽ʲ⁾` the `j`-th column of `G`.

use nalgebra::{DMatrix, DVector};

use crate::plant::RegularForm;
use crate::reaching::sgn;
use crate::surface::SurfaceGain;

/// Data fixed during one co-design solve.
#[derive(Debug, Clone)]
pub struct CoDesignContext<'a> {
    pub rf: &'a RegularForm,
    /// `𝒳(k)`, `n_x × N`.
    pub x_data: DMatrix<f64>,
    /// `s(k)`
    pub s: DVector<f64>,
    /// `ϖ̂(k−1)`
    pub varpi_hat: DVector<f64>,
    pub xi_t: f64,
}

/// Borrowed view of a packed unknown vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Unknowns {
    pub l: DVector<f64>,
    pub g: DMatrix<f64>,
    pub mu0: f64,
}

impl<'a> CoDesignContext<'a> {
    pub fn window(&self) -> usize {
        self.x_data.ncols()
    }

    pub fn n_unknowns(&self) -> usize {
        self.window() + self.rf.n_u() * self.rf.n_1() + 1
    }

    /// `𝒳₁(k)`
    pub fn x1(&self) -> DMatrix<f64> {
        self.x_data.rows(0, self.rf.n_1()).into_owned()
    }

    /// `P = B(ḠB)⁻¹`. `ḠB = B₁` for every `G` in regular form.
    pub fn p(&self) -> DMatrix<f64> {
        &self.rf.b * self.rf.b1_inv()
    }

    /// `c(μ̄₀) = μ̄₀s + ξT·sgn s − s + ϖ̂`
    pub fn c(&self, mu0: f64) -> DVector<f64> {
        &self.s * mu0 + sgn(&self.s) * self.xi_t - &self.s + &self.varpi_hat
    }

    /// `W = 𝒳 − P Ḡ 𝒳`
    pub fn w(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let g_bar = SurfaceGain::new(g.clone()).g_bar;
        &self.x_data - self.p() * (g_bar * &self.x_data)
    }

    pub fn pack(&self, l: &DVector<f64>, g: &DMatrix<f64>, mu0: f64) -> DVector<f64> {
        let n = self.window();
        let ng = g.len();
        let mut w = DVector::zeros(n + ng + 1);
        w.rows_mut(0, n).copy_from(l);
        w.rows_mut(n, ng).copy_from_slice(g.as_slice());
        w[n + ng] = mu0;
        w
    }

    pub fn unpack(&self, omega: &DVector<f64>) -> Unknowns {
        let n = self.window();
        let (m, n1) = (self.rf.n_u(), self.rf.n_1());
        Unknowns {
            l: omega.rows(0, n).into_owned(),
            g: DMatrix::from_column_slice(m, n1, omega.rows(n, m * n1).as_slice()),
            mu0: omega[n + m * n1],
        }
    }
}

/// `J = ‖W L − P c‖²` (the term carrying the unknown `ΔA` is left out).
pub fn objective_j(ctx: &CoDesignContext, l: &DVector<f64>, g: &DMatrix<f64>, mu0: f64) -> f64 {
    (ctx.w(g) * l - ctx.p() * ctx.c(mu0)).norm_squared()
}

/// The three derivative blocks in their natural shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarityBlocks {
    /// `2Wᵀ{WL − Pc}`, length `N`.
    pub d_l: DVector<f64>,
    /// `2𝒳₁LLᵀ𝒳₁ᵀGᵀ + 2𝒳₁L cᵀ`, shape `n₁ × n_u` (transposed relative to `G`).
    pub d_g: DMatrix<f64>,
    /// `2[−Ps]ᵀ{WL − Pc}`
    pub d_mu: f64,
}

pub fn stationarity_blocks(ctx: &CoDesignContext, x: &Unknowns) -> StationarityBlocks {
    let p = ctx.p();
    let w = ctx.w(&x.g);
    let c = ctx.c(x.mu0);
    let inner = &w * &x.l - &p * &c;
    let x1l = ctx.x1() * &x.l;
    StationarityBlocks {
        d_l: w.transpose() * &inner * 2.0,
        d_g: &x1l * x1l.transpose() * x.g.transpose() * 2.0 + &x1l * c.transpose() * 2.0,
        d_mu: 2.0 * (-(&p * &ctx.s)).dot(&inner),
    }
}

/// Residual of the stationarity system at packed `omega`.
///
/// Length `N + n_u·n₁ + 1`. The `∂J/∂G` block is laid out like `G` in `ω`
/// (entry `(i, j)` of `G` pairs with entry `(j, i)` of the block).
pub fn stationarity_residual(ctx: &CoDesignContext, omega: &DVector<f64>) -> DVector<f64> {
    let x = ctx.unpack(omega);
    let b = stationarity_blocks(ctx, &x);
    let gt = b.d_g.transpose();
    ctx.pack(&b.d_l, &gt, b.d_mu)
}

/// The first two blocks only, as a function of `(L, G)` with `μ̄₀` fixed.
pub fn reduced_residual(ctx: &CoDesignContext, lg: &DVector<f64>, mu0: f64) -> DVector<f64> {
    let mut omega = DVector::zeros(lg.len() + 1);
    omega.rows_mut(0, lg.len()).copy_from(lg);
    omega[lg.len()] = mu0;
    let full = stationarity_residual(ctx, &omega);
    full.rows(0, lg.len()).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlsolve::fd_jacobian;
    use crate::plant::{example_plant, to_regular_form};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx_with<'a>(rf: &'a RegularForm, x_data: DMatrix<f64>, s: f64, varpi: f64) -> CoDesignContext<'a> {
        CoDesignContext {
            rf,
            x_data,
            s: DVector::from_element(1, s),
            varpi_hat: DVector::from_element(1, varpi),
            xi_t: 0.01,
        }
    }

    #[test]
    fn zero_history_objective_is_switching_term_squared() {
        let rf = to_regular_form(&example_plant(0.8)).unwrap();
        let ctx = ctx_with(&rf, DMatrix::zeros(3, 2), 0.0, 0.0);
        let j = objective_j(&ctx, &DVector::zeros(2), &DMatrix::zeros(1, 2), 0.0);
        assert!((j - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn zero_point_is_stationary_for_zero_data() {
        let rf = to_regular_form(&example_plant(0.8)).unwrap();
        let ctx = ctx_with(&rf, DMatrix::zeros(3, 2), 0.0, 0.0);
        let r = stationarity_residual(&ctx, &DVector::zeros(ctx.n_unknowns()));
        assert_eq!(r.len(), 2 + 2 + 1);
        assert_eq!(r.amax(), 0.0);
    }

    #[test]
    fn pack_round_trip() {
        let rf = to_regular_form(&example_plant(0.8)).unwrap();
        let ctx = ctx_with(&rf, DMatrix::zeros(3, 4), 1.0, 0.0);
        let l = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let g = DMatrix::from_row_slice(1, 2, &[5.0, 6.0]);
        let u = ctx.unpack(&ctx.pack(&l, &g, 0.7));
        assert_eq!((u.l, u.g, u.mu0), (l, g, 0.7));
    }

    #[test]
    fn l_and_mu_blocks_match_finite_differences() {
        let rf = to_regular_form(&example_plant(0.8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x_data = DMatrix::from_fn(3, 2, |_, _| rng.random_range(-2.0..2.0));
            let ctx = ctx_with(&rf, x_data, rng.random_range(-1.0..1.0), rng.random_range(-0.1..0.1));
            let omega = DVector::from_fn(ctx.n_unknowns(), |_, _| rng.random_range(-1.0..1.0));
            let jfun = |w: &DVector<f64>| {
                let u = ctx.unpack(w);
                DVector::from_element(1, objective_j(&ctx, &u.l, &u.g, u.mu0))
            };
            let grad = fd_jacobian(jfun, &omega, 1e-6).unwrap().transpose();
            let r = stationarity_residual(&ctx, &omega);
            for idx in [0, 1, 4] {
                let scale = grad[idx].abs().max(r[idx].abs()).max(1e-8);
                assert!((grad[idx] - r[idx]).abs() / scale < 1e-6, "index {idx}");
            }
        }
    }
}
