//! Latent-coupling (LC) factorizations.
//!
//! A coupling `P` between outer marginals `a` (length `n`) and `b` (length `m`) is
//! stored as three non-negative factors
//!
//! ```text
//! P = Q · diag(1/g_Q) · T · diag(1/g_R) · Rᵀ
//! ```
//!
//! with `Q: n×r₁`, `R: m×r₂`, `T: r₁×r₂` and inner marginals `g_Q = Qᵀ1`, `g_R = Rᵀ1`.
//! When `Q·1 = a`, `R·1 = b` and `T ∈ Π(g_Q, g_R)` the product is a coupling of
//! `(a, b)` with non-negative rank at most `min(r₁, r₂)`. Nothing here ever forms the
//! `n×m` matrix unless asked to through [`reconstruct_plan`].

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::cost::CostSpec;
use crate::error::{OtError, Result};

/// Inner-marginal entries below this raise [`OtError::DegenerateMarginal`].
pub const DEGENERATE_FLOOR: f64 = 1e-15;
/// Divisions by inner-marginal entries never use a denominator below this.
pub const HARD_FLOOR: f64 = 1e-300;

/// A non-negative weight vector (probability vector in balanced roles).
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal(Array1<f64>);

impl Marginal {
    pub fn new(weights: Array1<f64>) -> Result<Self> {
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(OtError::invalid(format!("marginal entry {i} = {w} is not a finite non-negative number")));
        }
        Ok(Marginal(weights))
    }

    pub fn from_vec(weights: Vec<f64>) -> Result<Self> {
        Self::new(Array1::from(weights))
    }

    pub fn uniform(n: usize) -> Self {
        Marginal(Array1::from_elem(n, 1.0 / n as f64))
    }

    /// Rescale to unit mass.
    pub fn normalized(weights: Array1<f64>) -> Result<Self> {
        let total = weights.sum();
        if !(total > 0.0) {
            return Err(OtError::invalid("cannot normalize a marginal with zero mass"));
        }
        Self::new(weights / total)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.0.sum()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array1<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for Marginal {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// The central optimization state: sub-couplings `(Q, R, T)` plus cached inner marginals.
///
/// The caches are recomputed from `Q` and `R` on every construction, so they always
/// equal the column sums exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct LcFactors {
    q: Array2<f64>,
    r: Array2<f64>,
    t: Array2<f64>,
    g_q: Marginal,
    g_r: Marginal,
}

impl LcFactors {
    pub fn new(q: Array2<f64>, r: Array2<f64>, t: Array2<f64>) -> Result<Self> {
        if t.nrows() != q.ncols() || t.ncols() != r.ncols() {
            return Err(OtError::shape(format!(
                "T is {}x{} but Q has {} columns and R has {}",
                t.nrows(),
                t.ncols(),
                q.ncols(),
                r.ncols()
            )));
        }
        for (name, mat) in [("Q", &q), ("R", &r), ("T", &t)] {
            if mat.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(OtError::invalid(format!("{name} must be finite and entrywise non-negative")));
            }
        }
        let (g_q, g_r) = inner_marginals(q.view(), r.view());
        Ok(LcFactors { q, r, t, g_q, g_r })
    }

    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn r(&self) -> &Array2<f64> {
        &self.r
    }

    pub fn t(&self) -> &Array2<f64> {
        &self.t
    }

    pub fn g_q(&self) -> &Marginal {
        &self.g_q
    }

    pub fn g_r(&self) -> &Marginal {
        &self.g_r
    }

    /// `(n, m)`: the size of the plan this factorization represents.
    pub fn plan_shape(&self) -> (usize, usize) {
        (self.q.nrows(), self.r.nrows())
    }

    /// `(r₁, r₂)`.
    pub fn ranks(&self) -> (usize, usize) {
        (self.q.ncols(), self.r.ncols())
    }

    pub fn into_parts(self) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        (self.q, self.r, self.t)
    }

    /// Fails with `DegenerateMarginal` if any inner-marginal entry is below the floor.
    pub fn check_inner_marginals(&self) -> Result<()> {
        for g in [&self.g_q, &self.g_r] {
            if let Some((index, &value)) = g.view().iter().enumerate().find(|(_, v)| **v < DEGENERATE_FLOOR) {
                return Err(OtError::DegenerateMarginal { index, value });
            }
        }
        Ok(())
    }

    pub(crate) fn inv_g_q(&self) -> Array1<f64> {
        self.g_q.view().mapv(|g| 1.0 / g.max(HARD_FLOOR))
    }

    pub(crate) fn inv_g_r(&self) -> Array1<f64> {
        self.g_r.view().mapv(|g| 1.0 / g.max(HARD_FLOOR))
    }

    /// The inner matrix `X = diag(1/g_Q)·T·diag(1/g_R)`.
    pub fn inner_matrix(&self) -> Result<Array2<f64>> {
        self.check_inner_marginals()?;
        Ok(scale_rows_cols(&self.t, &self.inv_g_q(), &self.inv_g_r()))
    }
}

/// Column sums of `Q` and `R`, accumulated top to bottom.
pub fn inner_marginals(q: ArrayView2<'_, f64>, r: ArrayView2<'_, f64>) -> (Marginal, Marginal) {
    (Marginal(q.sum_axis(Axis(0))), Marginal(r.sum_axis(Axis(0))))
}

/// `diag(row)·M·diag(col)`.
pub(crate) fn scale_rows_cols(m: &Array2<f64>, row: &Array1<f64>, col: &Array1<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for ((i, j), x) in out.indexed_iter_mut() {
        *x *= row[i] * col[j];
    }
    out
}

/// Materialize `P = Q·diag(1/g_Q)·T·diag(1/g_R)·Rᵀ`.
pub fn reconstruct_plan(f: &LcFactors) -> Result<Array2<f64>> {
    let x = f.inner_matrix()?;
    Ok(f.q.dot(&x).dot(&f.r.t()))
}

/// `P·v` evaluated right to left without forming `P`.
pub fn apply_plan(f: &LcFactors, v: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if v.len() != f.r.nrows() {
        return Err(OtError::shape(format!("vector has length {}, plan has {} columns", v.len(), f.r.nrows())));
    }
    f.check_inner_marginals()?;
    let mut w = f.r.t().dot(&v);
    w *= &f.inv_g_r();
    let mut w = f.t.dot(&w);
    w *= &f.inv_g_q();
    Ok(f.q.dot(&w))
}

/// `Pᵀ·u` evaluated right to left without forming `P`.
pub fn apply_plan_transpose(f: &LcFactors, u: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if u.len() != f.q.nrows() {
        return Err(OtError::shape(format!("vector has length {}, plan has {} rows", u.len(), f.q.nrows())));
    }
    f.check_inner_marginals()?;
    let mut w = f.q.t().dot(&u);
    w *= &f.inv_g_q();
    let mut w = f.t.t().dot(&w);
    w *= &f.inv_g_r();
    Ok(f.r.dot(&w))
}

/// `⟨C, P⟩_F` as `Σ (Qᵀ C R) ⊙ X`, which only needs `C·R` (never an `n×m` buffer when
/// the cost is factored).
pub fn primal_cost(f: &LcFactors, c: &CostSpec) -> Result<f64> {
    let cost = c.linear().ok_or(OtError::MissingLinearCost)?;
    let (n, m) = f.plan_shape();
    if cost.shape() != (n, m) {
        return Err(OtError::shape(format!("cost is {:?}, factors describe {n}x{m}", cost.shape())));
    }
    let x = f.inner_matrix()?;
    let qtcr = f.q.t().dot(&cost.right_mul(&f.r));
    Ok((&qtcr * &x).sum())
}

/// L1 residuals `(‖P·1 − a‖₁, ‖Pᵀ·1 − b‖₁)`.
pub fn marginal_residuals(f: &LcFactors, a: &Marginal, b: &Marginal) -> Result<(f64, f64)> {
    let (n, m) = f.plan_shape();
    if a.len() != n || b.len() != m {
        return Err(OtError::shape(format!("marginals have lengths ({}, {}), plan is {n}x{m}", a.len(), b.len())));
    }
    let rows = apply_plan(f, Array1::ones(m).view())?;
    let cols = apply_plan_transpose(f, Array1::ones(n).view())?;
    let left = rows.iter().zip(a.view()).map(|(p, a)| (p - a).abs()).sum();
    let right = cols.iter().zip(b.view()).map(|(p, b)| (p - b).abs()).sum();
    Ok((left, right))
}
