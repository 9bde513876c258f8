use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

/// Sliding window of past states and inputs.
///
/// Holds `x(k), x(k−1), …, x(k−N)` and `u(k−1), …, u(k−N)`, newest first, so
/// that `𝒳(k)` and `𝒳(k−1)` share `N−1` columns. Everything starts at zero;
/// `x(0)` itself is never pushed, which makes `𝒳(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    n: usize,
    states: VecDeque<DVector<f64>>,
    inputs: VecDeque<DVector<f64>>,
}

impl HistoryBuffer {
    pub fn new(n: usize, n_x: usize, n_u: usize) -> Self {
        assert!(n >= 1, "window length must be at least 1");
        Self {
            n,
            states: (0..=n).map(|_| DVector::zeros(n_x)).collect(),
            inputs: (0..n).map(|_| DVector::zeros(n_u)).collect(),
        }
    }

    pub fn window(&self) -> usize {
        self.n
    }

    /// Prepends `x(k+1)` and `u(k)`, dropping the oldest column of each.
    pub fn push(&mut self, x_new: &DVector<f64>, u_applied: &DVector<f64>) {
        assert_eq!(x_new.len(), self.states[0].len(), "state length mismatch");
        assert_eq!(u_applied.len(), self.inputs[0].len(), "input length mismatch");
        self.states.push_front(x_new.clone());
        self.states.pop_back();
        self.inputs.push_front(u_applied.clone());
        self.inputs.pop_back();
    }

    fn columns<'a>(cols: impl Iterator<Item = &'a DVector<f64>>, rows: usize, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(rows, n);
        for (j, c) in cols.enumerate() {
            m.set_column(j, c);
        }
        m
    }

    /// `𝒳(k) = [x(k), …, x(k−N+1)]`
    pub fn x_next(&self) -> DMatrix<f64> {
        Self::columns(self.states.iter().take(self.n), self.states[0].len(), self.n)
    }

    /// `𝒳(k−1) = [x(k−1), …, x(k−N)]`
    pub fn x_hist(&self) -> DMatrix<f64> {
        Self::columns(self.states.iter().skip(1), self.states[0].len(), self.n)
    }

    /// `𝒰(k−1) = [u(k−1), …, u(k−N)]`
    pub fn u_hist(&self) -> DMatrix<f64> {
        Self::columns(self.inputs.iter(), self.inputs[0].len(), self.n)
    }

    /// Top `n_1` rows of `𝒳(k)`.
    pub fn x1_next(&self, n_1: usize) -> DMatrix<f64> {
        self.x_next().rows(0, n_1).into_owned()
    }

    /// Bottom rows of `𝒳(k)` after the first `n_1`.
    pub fn x2_next(&self, n_1: usize) -> DMatrix<f64> {
        let x = self.x_next();
        let rows = x.nrows() - n_1;
        x.rows(n_1, rows).into_owned()
    }
}
