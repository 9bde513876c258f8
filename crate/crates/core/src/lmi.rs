//! Log-barrier solver for small affine LMI problems of the form
//!
//! ```text
//! minimize   λ_max(F(z))
//! subject to C_j(z) ≻ 0
//! ```
//!
//! where `F` and every `C_j` are affine symmetric matrix functions. The
//! epigraph variable `t` is added and `t·I − F(z) ≻ 0` is handled like the
//! other constraints. Newton steps use the exact barrier Hessian; problem
//! sizes here are a handful of variables and blocks of at most ~10 rows.

use nalgebra::{DMatrix, DVector};

use crate::linalg;

/// Symmetric matrix function `F(z) = F₀ + Σ zᵢ Fᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSym {
    pub constant: DMatrix<f64>,
    pub coeffs: Vec<DMatrix<f64>>,
}

impl AffineSym {
    /// Extracts the affine representation of `f` by evaluating it at `0` and
    /// at the unit vectors. `f` must be affine.
    pub fn from_map<F>(n_vars: usize, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64>,
    {
        let zero = DVector::zeros(n_vars);
        let constant = linalg::symmetrize(&f(&zero));
        let coeffs = (0..n_vars)
            .map(|i| {
                let mut e = zero.clone();
                e[i] = 1.0;
                linalg::symmetrize(&f(&e)) - &constant
            })
            .collect();
        Self { constant, coeffs }
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (zi, fi) in z.iter().zip(&self.coeffs) {
            if *zi != 0.0 {
                m += fi * *zi;
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierOptions {
    pub max_outer: usize,
    pub max_newton: usize,
    /// Barrier weight growth factor.
    pub growth: f64,
    /// Stop when (total barrier degree) / weight falls below this.
    pub gap_tol: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            max_outer: 40,
            max_newton: 80,
            growth: 8.0,
            gap_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierResult {
    pub z: DVector<f64>,
    /// `λ_max(F(z))` at the returned point, recomputed by eigen-decomposition.
    pub max_eigenvalue: f64,
    pub newton_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BarrierError {
    /// The starting point does not satisfy the side constraints strictly.
    InfeasibleStart,
}

struct Block {
    constant: DMatrix<f64>,
    /// Derivative with respect to each of `(z₀, …, z_{n−1}, t)`.
    derivs: Vec<DMatrix<f64>>,
}

impl Block {
    fn eval(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (yi, d) in y.iter().zip(&self.derivs) {
            if *yi != 0.0 {
                m += d * *yi;
            }
        }
        m
    }
}

/// Returns `Σ log det Bⱼ(y)` or `None` if some block is not positive definite.
fn log_det_sum(blocks: &[Block], y: &DVector<f64>) -> Option<f64> {
    let mut acc = 0.0;
    for b in blocks {
        let m = b.eval(y);
        let ch = m.cholesky()?;
        acc += ch.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum::<f64>();
    }
    acc.is_finite().then_some(acc)
}

/// Minimizes the largest eigenvalue of `objective` subject to `constraints ≻ 0`,
/// starting from `z0` (which must satisfy the constraints strictly).
pub fn minimize_max_eigenvalue(
    objective: &AffineSym,
    constraints: &[AffineSym],
    z0: &DVector<f64>,
    opts: &BarrierOptions,
) -> Result<BarrierResult, BarrierError> {
    let nz = objective.n_vars();
    let ny = nz + 1;
    let p = objective.dim();

    let mut blocks = Vec::with_capacity(constraints.len() + 1);
    {
        let mut derivs: Vec<DMatrix<f64>> = objective.coeffs.iter().map(|c| -c).collect();
        derivs.push(DMatrix::identity(p, p));
        blocks.push(Block {
            constant: -&objective.constant,
            derivs,
        });
    }
    for c in constraints {
        assert_eq!(c.n_vars(), nz, "constraint variable count mismatch");
        let mut derivs = c.coeffs.clone();
        derivs.push(DMatrix::zeros(c.dim(), c.dim()));
        blocks.push(Block {
            constant: c.constant.clone(),
            derivs,
        });
    }
    let degree: usize = blocks.iter().map(|b| b.constant.nrows()).sum();

    let mut y = DVector::zeros(ny);
    y.rows_mut(0, nz).copy_from(z0);
    y[nz] = linalg::max_sym_eigenvalue(&objective.eval(z0)) + 1.0;
    if log_det_sum(&blocks, &y).is_none() {
        return Err(BarrierError::InfeasibleStart);
    }

    let phi = |y: &DVector<f64>, weight: f64| -> Option<f64> {
        log_det_sum(&blocks, y).map(|ld| weight * y[nz] - ld)
    };

    let mut weight = 1.0;
    let mut newton_steps = 0;
    for _ in 0..opts.max_outer {
        for _ in 0..opts.max_newton {
            let mut grad = DVector::zeros(ny);
            grad[nz] = weight;
            let mut hess = DMatrix::zeros(ny, ny);
            for b in &blocks {
                let m = b.eval(&y);
                let inv = match m.cholesky() {
                    Some(ch) => ch.inverse(),
                    None => unreachable!("iterate left the feasible set"),
                };
                let prods: Vec<DMatrix<f64>> = b.derivs.iter().map(|d| &inv * d).collect();
                for a in 0..ny {
                    grad[a] -= prods[a].trace();
                    for c in a..ny {
                        let v = (&prods[a] * &prods[c]).trace();
                        hess[(a, c)] += v;
                        if a != c {
                            hess[(c, a)] += v;
                        }
                    }
                }
            }
            // Light regularization keeps the Newton system solvable when a
            // variable does not enter any block.
            for i in 0..ny {
                hess[(i, i)] += 1e-12 * (1.0 + hess[(i, i)]);
            }
            let step = match hess.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => match hess.lu().solve(&(-&grad)) {
                    Some(s) => s,
                    None => break,
                },
            };
            let decrement = -grad.dot(&step);
            if decrement.is_nan() || decrement * 0.5 < 1e-11 {
                break;
            }
            let f0 = phi(&y, weight).expect("current iterate is feasible");
            let mut alpha = 1.0;
            let mut moved = false;
            while alpha > 1e-14 {
                let cand = &y + &step * alpha;
                if let Some(f1) = phi(&cand, weight) {
                    if f1 <= f0 - 0.25 * alpha * decrement {
                        y = cand;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            newton_steps += 1;
            if !moved {
                break;
            }
        }
        if (degree as f64) / weight < opts.gap_tol || y[nz] < -1e8 {
            break;
        }
        weight *= opts.growth;
    }

    let z = y.rows(0, nz).into_owned();
    let max_eigenvalue = linalg::max_sym_eigenvalue(&objective.eval(&z));
    Ok(BarrierResult {
        z,
        max_eigenvalue,
        newton_steps,
    })
}

/// Half-vectorization helpers for symmetric decision matrices.
pub fn sym_from_vech(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut idx = 0;
    for j in 0..n {
        for i in j..n {
            m[(i, j)] = v[idx];
            m[(j, i)] = v[idx];
            idx += 1;
        }
    }
    m
}

pub fn vech(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in j..n {
            out.push(m[(i, j)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vech_round_trip() {
        let m = linalg::from_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 5.0], &[3.0, 5.0, 6.0]]);
        assert_eq!(sym_from_vech(&vech(&m), 3), m);
    }

    #[test]
    fn minimizes_eigenvalue_of_diagonal_family() {
        // F(z) = diag(z, 1 − z) with 0 < z < 1: optimum λ_max = 0.5 at z = 0.5.
        let obj = AffineSym::from_map(1, |z| {
            DMatrix::from_diagonal(&DVector::from_vec(vec![z[0], 1.0 - z[0]]))
        });
        let lo = AffineSym::from_map(1, |z| DMatrix::from_element(1, 1, z[0]));
        let hi = AffineSym::from_map(1, |z| DMatrix::from_element(1, 1, 1.0 - z[0]));
        let res = minimize_max_eigenvalue(
            &obj,
            &[lo, hi],
            &DVector::from_element(1, 0.1),
            &BarrierOptions::default(),
        )
        .unwrap();
        assert!((res.z[0] - 0.5).abs() < 1e-6, "z = {}", res.z[0]);
        assert!((res.max_eigenvalue - 0.5).abs() < 1e-6);
    }

    #[test]
    fn infeasible_start_is_reported() {
        let obj = AffineSym::from_map(1, |z| DMatrix::from_element(1, 1, z[0]));
        let c = AffineSym::from_map(1, |z| DMatrix::from_element(1, 1, z[0]));
        let err = minimize_max_eigenvalue(
            &obj,
            &[c],
            &DVector::from_element(1, -1.0),
            &BarrierOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err, BarrierError::InfeasibleStart);
    }
}
