//! Post-hoc analysis of LC factorizations: barycentric projections, diagonal
//! (factored-coupling) form, the closed-form inner marginal, and the rank error bound.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};

use crate::cost::CostSpec;
use crate::error::{OtError, Result};
use crate::lc::{LcFactors, Marginal};

/// Anchors obtained by averaging each dataset through its sub-coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct Barycenters {
    /// `r₁×d`, one anchor per column of `Q`.
    pub y1: Array2<f64>,
    /// `r₂×d`, one anchor per column of `R`.
    pub y2: Array2<f64>,
}

fn scale_rows(m: Array2<f64>, s: &Array1<f64>) -> Array2<f64> {
    let mut m = m;
    for (mut row, &x) in m.rows_mut().into_iter().zip(s) {
        row *= x;
    }
    m
}

/// `Y1 = diag(1/g_Q)·Qᵀ·Z1`, `Y2 = diag(1/g_R)·Rᵀ·Z2`.
pub fn lc_project(f: &LcFactors, z1: &Array2<f64>, z2: &Array2<f64>) -> Result<Barycenters> {
    let (n, m) = f.plan_shape();
    if z1.nrows() != n || z2.nrows() != m {
        return Err(OtError::shape(format!(
            "points have {} and {} rows, factors describe a {n}x{m} plan",
            z1.nrows(),
            z2.nrows()
        )));
    }
    f.check_inner_marginals()?;
    let y1 = scale_rows(f.q().t().dot(z1), &f.inv_g_q());
    let y2 = scale_rows(f.r().t().dot(z2), &f.inv_g_r());
    Ok(Barycenters { y1, y2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Rewrite the LC factorization as a factored coupling `Q'·diag(1/g)·R'ᵀ` with a single
/// inner marginal. `Left` folds `T` into `Q` (`Q' = Q·diag(1/g_Q)·T`, `g = g_R`);
/// `Right` folds it into `R` (`R' = R·diag(1/g_R)·Tᵀ`, `g = g_Q`).
pub fn diagonalize(f: &LcFactors, side: Side) -> Result<(Array2<f64>, Array2<f64>, Marginal)> {
    f.check_inner_marginals()?;
    Ok(match side {
        Side::Left => {
            let q = scale_rows(f.t().clone(), &f.inv_g_q());
            (f.q().dot(&q), f.r().clone(), f.g_r().clone())
        }
        Side::Right => {
            let r = scale_rows(f.t().t().to_owned(), &f.inv_g_r());
            (f.q().clone(), f.r().dot(&r), f.g_q().clone())
        }
    })
}

/// Result of [`optimal_g`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormG {
    pub g: Marginal,
    /// Indices where `ω` vanished, so `g` sits on the simplex boundary there.
    pub zero_entries: Vec<usize>,
}

/// `ω = diag(Qᵀ·C·R)`.
pub fn omega(q: &Array2<f64>, r: &Array2<f64>, c: &CostSpec) -> Result<Array1<f64>> {
    if q.ncols() != r.ncols() {
        return Err(OtError::shape(format!("Q has {} columns, R has {}", q.ncols(), r.ncols())));
    }
    let cost = c.linear().ok_or(OtError::MissingLinearCost)?;
    if cost.shape() != (q.nrows(), r.nrows()) {
        return Err(OtError::shape(format!("cost is {:?}, factors need ({}, {})", cost.shape(), q.nrows(), r.nrows())));
    }
    Ok((q * &cost.right_mul(r)).sum_axis(Axis(0)))
}

/// Minimizer of `⟨Q·diag(1/g)·Rᵀ, C⟩` over the simplex: `g ∝ √ω`.
///
/// Entries of `ω` within round-off of zero (relative `1e-12`) are treated as zero and
/// reported in `zero_entries`; clearly negative entries are an error. If every entry
/// vanishes the objective is constant and the uniform vector is returned.
pub fn optimal_g(q: &Array2<f64>, r: &Array2<f64>, c: &CostSpec) -> Result<ClosedFormG> {
    let w = omega(q, r, c)?;
    let scale = w.iter().map(|x| x.abs()).sum::<f64>();
    let tol = 1e-12 * scale;
    if let Some((index, &value)) = w.iter().enumerate().find(|(_, x)| **x < -tol) {
        return Err(OtError::NegativeOmega { index, value });
    }
    let zero_entries: Vec<usize> = (0..w.len()).filter(|&i| w[i] <= tol).collect();
    let roots = w.mapv(|x| if x <= tol { 0.0 } else { x.sqrt() });
    let total = roots.sum();
    let g = if total > 0.0 { Marginal::new(roots / total)? } else { Marginal::uniform(w.len()) };
    Ok(ClosedFormG { g, zero_entries })
}

/// `Σ_k ω_k / g_k`, the factored-coupling cost for a given inner marginal.
pub fn factored_cost(omega: &Array1<f64>, g: &Array1<f64>) -> f64 {
    omega.iter().zip(g).map(|(w, x)| if *w == 0.0 { 0.0 } else { w / x }).sum()
}

/// Worst-case gap between the best rank-`r` and the unconstrained transport cost:
/// `mass·(max C − min C)·ln(min(n, m)/(r − 1))`, floored at zero.
pub fn rank_bound(c: &CostSpec, n: usize, m: usize, r: usize, mass: f64) -> Result<f64> {
    if r < 2 {
        return Err(OtError::InvalidRank(r));
    }
    let cost = c.linear().ok_or(OtError::MissingLinearCost)?;
    let (lo, hi) = cost.range();
    let z = n.min(m) as f64;
    Ok((mass * (hi - lo) * (z / (r - 1) as f64).ln()).max(0.0))
}

/// Number of singular values above `rel_tol·σ₁`.
pub fn numeric_rank(p: &Array2<f64>, rel_tol: f64) -> usize {
    if p.is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| p[[i, j]]);
    let sv = m.singular_values();
    let top = sv.max();
    if top <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// SVD rank at tolerance `1e-10·σ₁`. This lower-bounds the non-negative rank, whose
/// upper bound for an LC factorization is `min(r₁, r₂)`.
pub fn numeric_nonneg_rank_upper(p: &Array2<f64>) -> usize {
    numeric_rank(p, 1e-10)
}
