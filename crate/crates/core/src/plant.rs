//! Uncertain discrete-time plant, its regular-form transformation and the
//! true-system simulation step.
//!
//! The plant evolves in the original coordinates as
//! `ς(k+1) = (Ã + DΔE) ς(k) + B̃ u(k) + f(k)`. All controllers work in the
//! regular-form coordinates `x = T_c ς`, where the input matrix becomes
//! `[0; B₁]`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::PlantError;
use crate::linalg;

/// State vector in regular-form coordinates, `x = [x₁; x₂]`.
pub type StateVector = DVector<f64>;

/// Additive state disturbance `f(k)` expressed in the original coordinates.
///
/// A constant vector over a closed window `[start, end]` plus optional
/// per-step entries; both contributions are summed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DisturbanceSchedule {
    window: Option<DisturbanceWindow>,
    table: BTreeMap<usize, DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceWindow {
    pub start: usize,
    pub end: usize,
    pub vector: DVector<f64>,
}

impl DisturbanceSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn window(start: usize, end: usize, vector: DVector<f64>) -> Self {
        Self {
            window: Some(DisturbanceWindow { start, end, vector }),
            table: BTreeMap::new(),
        }
    }

    pub fn with_entry(mut self, k: usize, f: DVector<f64>) -> Self {
        self.table.insert(k, f);
        self
    }

    pub fn window_spec(&self) -> Option<&DisturbanceWindow> {
        self.window.as_ref()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, &DVector<f64>)> {
        self.table.iter().map(|(k, v)| (*k, v))
    }

    pub fn is_zero(&self) -> bool {
        self.window.as_ref().map_or(true, |w| w.vector.iter().all(|v| *v == 0.0))
            && self.table.values().all(|v| v.iter().all(|x| *x == 0.0))
    }

    /// True when `f(k)` may be nonzero at step `k`.
    pub fn is_active(&self, k: usize) -> bool {
        self.window
            .as_ref()
            .is_some_and(|w| k >= w.start && k <= w.end)
            || self.table.contains_key(&k)
    }

    /// `f(k)` in original coordinates, length `n`.
    pub fn at(&self, k: usize, n: usize) -> DVector<f64> {
        let mut f = DVector::zeros(n);
        if let Some(w) = &self.window {
            if k >= w.start && k <= w.end {
                f += &w.vector;
            }
        }
        if let Some(v) = self.table.get(&k) {
            f += v;
        }
        f
    }

    fn check_dims(&self, n: usize) -> Result<(), PlantError> {
        if let Some(w) = &self.window {
            if w.vector.len() != n {
                return Err(PlantError::Dimension(format!(
                    "disturbance vector has length {}, expected {n}",
                    w.vector.len()
                )));
            }
            if w.start > w.end {
                return Err(PlantError::Dimension(format!(
                    "disturbance window start {} after end {}",
                    w.start, w.end
                )));
            }
        }
        for (k, v) in &self.table {
            if v.len() != n {
                return Err(PlantError::Dimension(format!(
                    "disturbance entry at k={k} has length {}, expected {n}",
                    v.len()
                )));
            }
        }
        Ok(())
    }
}

/// The uncertain plant `(Ã, B̃, D, E)` with a concrete realization `Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub a_tilde: DMatrix<f64>,
    pub b_tilde: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub disturbance: DisturbanceSchedule,
}

impl Plant {
    /// Validates dimensions and controllability of `(Ã, B̃)`.
    pub fn new(
        a_tilde: DMatrix<f64>,
        b_tilde: DMatrix<f64>,
        d: DMatrix<f64>,
        e: DMatrix<f64>,
        delta: DMatrix<f64>,
    ) -> Result<Self, PlantError> {
        let n = a_tilde.nrows();
        if !a_tilde.is_square() || n == 0 {
            return Err(PlantError::Dimension(format!(
                "a_tilde must be square and non-empty, got {}x{}",
                a_tilde.nrows(),
                a_tilde.ncols()
            )));
        }
        let n_u = b_tilde.ncols();
        if b_tilde.nrows() != n || n_u == 0 || n_u > n {
            return Err(PlantError::Dimension(format!(
                "b_tilde must be {n}x n_u with 1 <= n_u <= {n}, got {}x{}",
                b_tilde.nrows(),
                n_u
            )));
        }
        if d.nrows() != n {
            return Err(PlantError::Dimension(format!(
                "d must have {n} rows, got {}",
                d.nrows()
            )));
        }
        if e.ncols() != n {
            return Err(PlantError::Dimension(format!(
                "e must have {n} columns, got {}",
                e.ncols()
            )));
        }
        if delta.nrows() != d.ncols() || delta.ncols() != e.nrows() {
            return Err(PlantError::Dimension(format!(
                "delta must be {}x{}, got {}x{}",
                d.ncols(),
                e.nrows(),
                delta.nrows(),
                delta.ncols()
            )));
        }
        let ctrb = controllability_matrix(&a_tilde, &b_tilde);
        let r = linalg::rank(&ctrb, 1e-10);
        if r < n {
            return Err(PlantError::Uncontrollable { rank: r, n });
        }
        Ok(Self {
            a_tilde,
            b_tilde,
            d,
            e,
            delta,
            disturbance: DisturbanceSchedule::none(),
        })
    }

    pub fn with_disturbance(mut self, schedule: DisturbanceSchedule) -> Result<Self, PlantError> {
        schedule.check_dims(self.n_states())?;
        self.disturbance = schedule;
        Ok(self)
    }

    /// Same plant with a different uncertainty realization.
    pub fn with_delta(&self, delta: DMatrix<f64>) -> Result<Self, PlantError> {
        if delta.shape() != self.delta.shape() {
            return Err(PlantError::Dimension(format!(
                "delta must be {}x{}",
                self.delta.nrows(),
                self.delta.ncols()
            )));
        }
        let mut p = self.clone();
        p.delta = delta;
        Ok(p)
    }

    pub fn n_states(&self) -> usize {
        self.a_tilde.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b_tilde.ncols()
    }

    /// `‖Δ‖₂ ≤ 1`. Realizations outside the bound are allowed but void the robust guarantees.
    pub fn is_within_bound(&self) -> bool {
        linalg::spectral_norm(&self.delta) <= 1.0 + 1e-12
    }
}

/// `[B, AB, …, A^{n-1}B]`.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = DMatrix::zeros(n, n * m);
    let mut blk = b.clone();
    for i in 0..n {
        out.view_mut((0, i * m), (n, m)).copy_from(&blk);
        blk = a * blk;
    }
    out
}

/// Plant matrices in regular-form coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularForm {
    pub t_c: DMatrix<f64>,
    pub t_c_inv: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub a11: DMatrix<f64>,
    pub a12: DMatrix<f64>,
    pub a21: DMatrix<f64>,
    pub a22: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    /// `D̄ = T_c D`
    pub d_bar: DMatrix<f64>,
    pub d_bar1: DMatrix<f64>,
    pub d_bar2: DMatrix<f64>,
    /// `Ē = E T_c⁻¹`
    pub e_bar: DMatrix<f64>,
    pub e_bar1: DMatrix<f64>,
    pub e_bar2: DMatrix<f64>,
    b1_inv: DMatrix<f64>,
}

impl RegularForm {
    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    /// Number of unactuated states, `n_x − n_u`.
    pub fn n_1(&self) -> usize {
        self.n_x() - self.n_u()
    }

    pub fn b1_inv(&self) -> &DMatrix<f64> {
        &self.b1_inv
    }

    /// `ΔA = D̄ΔĒ` for a given realization.
    pub fn delta_a(&self, delta: &DMatrix<f64>) -> DMatrix<f64> {
        &self.d_bar * delta * &self.e_bar
    }

    /// Maps a vector from original to regular-form coordinates.
    pub fn to_x(&self, sigma: &DVector<f64>) -> DVector<f64> {
        &self.t_c * sigma
    }

    pub fn to_sigma(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.t_c_inv * x
    }

    /// Splits `x` into `(x₁, x₂)`.
    pub fn split(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n1 = self.n_1();
        (x.rows(0, n1).into_owned(), x.rows(n1, self.n_u()).into_owned())
    }
}

/// Transforms the plant into regular form with
/// `T_c = [[I, −B̃₁B̃₂⁻¹], [0, I]]`.
pub fn to_regular_form(plant: &Plant) -> Result<RegularForm, PlantError> {
    let n = plant.n_states();
    let m = plant.n_inputs();
    let n1 = n - m;
    let bt = &plant.b_tilde;

    let r = linalg::rank(bt, 1e-10);
    if r < m {
        return Err(PlantError::RankDeficient { rank: r, cols: m });
    }
    let b_top = bt.rows(0, n1).into_owned();
    let b_bot = bt.rows(n1, m).into_owned();
    if linalg::rank(&b_bot, 1e-10) < m {
        return Err(PlantError::NotPartitionable { n_u: m });
    }
    let b_bot_inv = b_bot
        .clone()
        .try_inverse()
        .ok_or(PlantError::NotPartitionable { n_u: m })?;
    let coupling = &b_top * &b_bot_inv;

    let mut t_c = DMatrix::identity(n, n);
    let mut t_c_inv = DMatrix::identity(n, n);
    if n1 > 0 {
        t_c.view_mut((0, n1), (n1, m)).copy_from(&(-&coupling));
        t_c_inv.view_mut((0, n1), (n1, m)).copy_from(&coupling);
    }

    let a = &t_c * &plant.a_tilde * &t_c_inv;
    let mut b = &t_c * bt;
    // The upper block is zero by construction; remove rounding residue.
    b.view_mut((0, 0), (n1, m)).fill(0.0);
    let b1 = b.rows(n1, m).into_owned();
    let b1_inv = b1
        .clone()
        .try_inverse()
        .ok_or(PlantError::NotPartitionable { n_u: m })?;

    let d_bar = &t_c * &plant.d;
    let e_bar = &plant.e * &t_c_inv;

    Ok(RegularForm {
        a11: a.view((0, 0), (n1, n1)).into_owned(),
        a12: a.view((0, n1), (n1, m)).into_owned(),
        a21: a.view((n1, 0), (m, n1)).into_owned(),
        a22: a.view((n1, n1), (m, m)).into_owned(),
        d_bar1: d_bar.rows(0, n1).into_owned(),
        d_bar2: d_bar.rows(n1, m).into_owned(),
        e_bar1: e_bar.columns(0, n1).into_owned(),
        e_bar2: e_bar.columns(n1, m).into_owned(),
        t_c,
        t_c_inv,
        a,
        b,
        b1,
        d_bar,
        e_bar,
        b1_inv,
    })
}

/// True plant step in regular-form coordinates:
/// `x(k+1) = (A + D̄ΔĒ) x + B u + T_c f(k)`.
pub fn step(
    rf: &RegularForm,
    plant: &Plant,
    x: &StateVector,
    u: &DVector<f64>,
    k: usize,
) -> StateVector {
    assert_eq!(x.len(), rf.n_x(), "state dimension mismatch");
    assert_eq!(u.len(), rf.n_u(), "input dimension mismatch");
    let a_true = &rf.a + rf.delta_a(&plant.delta);
    let mut next = a_true * x + &rf.b * u;
    if plant.disturbance.is_active(k) {
        next += &rf.t_c * plant.disturbance.at(k, rf.n_x());
    }
    next
}

/// Matrices of Example 1: `A`, `B`, `D̄`, `Ē` (already in regular form).
pub fn example_plant(delta: f64) -> Plant {
    let a = linalg::from_rows(&[
        &[0.1012, 0.8075, 1.7837],
        &[-0.0529, 0.0944, -0.0396],
        &[0.0, 0.1937, 0.5402],
    ]);
    let b = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 0.1]);
    let d = DMatrix::from_column_slice(3, 1, &[0.2, 0.1, 0.2]);
    let e = DMatrix::from_row_slice(1, 3, &[0.5, 0.2, 0.1]);
    Plant::new(a, b, d, e, DMatrix::from_element(1, 1, delta))
        .expect("example plant is valid")
}
