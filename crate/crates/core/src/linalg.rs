//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Numerical rank from the singular values, relative tolerance `rtol`.
pub fn rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * smax).count()
}

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Spectral radius of a square matrix (max modulus of the complex eigenvalues).
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    match m.nrows() {
        0 => 0.0,
        1 => m[(0, 0)].abs(),
        _ => m
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
    }
}

/// Largest eigenvalue of a symmetric matrix. Only the lower triangle is trusted,
/// the input is symmetrized first.
pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = symmetrize(m);
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = symmetrize(m);
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Minimum-norm least-squares solution of `a x = b` via SVD.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    if a.nrows() == 0 {
        return DVector::zeros(a.ncols());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = (smax * 1e-12).max(f64::MIN_POSITIVE);
    svd.solve(b, eps)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Moore-Penrose pseudo-inverse with relative cutoff 1e-12.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.is_empty() {
        return DMatrix::zeros(a.ncols(), a.nrows());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = (smax * 1e-12).max(f64::MIN_POSITIVE);
    svd.pseudo_inverse(eps)
        .unwrap_or_else(|_| DMatrix::zeros(a.ncols(), a.nrows()))
}

/// Builds a matrix from row slices. Panics on ragged input.
pub fn from_rows(rows: &[&[f64]]) -> DMatrix<f64> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
    DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j])
}

/// Infinity norm of a vector, zero when empty.
pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_radius_of_rotation_is_one() {
        let r = from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        assert!((spectral_radius(&r) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_detects_dependent_columns() {
        let m = from_rows(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]);
        assert_eq!(rank(&m, 1e-10), 1);
        assert_eq!(rank(&DMatrix::<f64>::zeros(2, 2), 1e-10), 0);
    }

    #[test]
    fn lstsq_returns_min_norm_solution() {
        let a = from_rows(&[&[1.0, 1.0]]);
        let b = DVector::from_vec(vec![2.0]);
        let x = lstsq(&a, &b);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sym_eigen_extremes() {
        let m = from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        assert!((max_sym_eigenvalue(&m) - 3.0).abs() < 1e-12);
        assert!((min_sym_eigenvalue(&m) - 1.0).abs() < 1e-12);
    }
}
