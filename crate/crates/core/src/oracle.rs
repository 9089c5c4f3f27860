//! Independent ground truth at desk scale: exact assignment, long-run entropic OT and
//! the quadruple-loop GW objective. Nothing here shares code with the solver.

use ndarray::{Array1, Array2};

use crate::error::{OtError, Result};
use crate::lc::Marginal;
use crate::projections::ScalingResult;

/// Largest size searched by [`assignment_exhaustive`].
pub const EXHAUSTIVE_MAX: usize = 10;
/// Largest side accepted by [`brute_gw_cost`].
pub const BRUTE_GW_MAX: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    pub cost: f64,
    pub plan: Array2<f64>,
}

fn check_square(c: &Array2<f64>) -> Result<usize> {
    if c.nrows() != c.ncols() {
        return Err(OtError::shape(format!("assignment needs a square cost, got {:?}", c.dim())));
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(OtError::invalid("cost entries must be finite"));
    }
    Ok(c.nrows())
}

/// `(1/n)·Σ_i C[i, σ(i)]`, summed in row order so equal permutations give equal bits.
fn assignment_cost(c: &Array2<f64>, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum::<f64>() / perm.len() as f64
}

fn permutation_plan(perm: &[usize]) -> Array2<f64> {
    let n = perm.len();
    let mut p = Array2::zeros((n, n));
    for (i, &j) in perm.iter().enumerate() {
        p[[i, j]] = 1.0 / n as f64;
    }
    p
}

/// Minimum over all `n!` permutations (Heap's algorithm). Returns `σ` with row `i`
/// assigned to column `σ(i)`.
pub fn assignment_exhaustive(c: &Array2<f64>) -> Result<Vec<usize>> {
    let n = check_square(c)?;
    if n > EXHAUSTIVE_MAX {
        return Err(OtError::TooLarge(format!("exhaustive assignment is limited to n <= {EXHAUSTIVE_MAX}, got {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_sum: f64 = perm.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum();
    let mut counters = vec![0; n];
    let mut i = 1;
    while i < n {
        if counters[i] < i {
            let k = if i % 2 == 0 { 0 } else { counters[i] };
            perm.swap(k, i);
            let s: f64 = perm.iter().enumerate().map(|(r, &j)| c[[r, j]]).sum();
            if s < best_sum {
                best_sum = s;
                best.copy_from_slice(&perm);
            }
            counters[i] += 1;
            i = 1;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

/// Shortest augmenting path assignment (Hungarian method with potentials), `O(n³)`.
pub fn assignment_hungarian(c: &Array2<f64>) -> Result<Vec<usize>> {
    let n = check_square(c)?;
    // 1-based arrays with a sentinel column 0, as in the classical formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    Ok(perm)
}

/// Exact OT between uniform marginals of a square cost (an assignment problem).
pub fn exact_ot_uniform(c: &Array2<f64>) -> Result<ExactResult> {
    let perm = assignment_hungarian(c)?;
    Ok(ExactResult { cost: assignment_cost(c, &perm), plan: permutation_plan(&perm) })
}

/// Same, by exhaustive search (`n ≤ 10`).
pub fn exact_ot_uniform_exhaustive(c: &Array2<f64>) -> Result<ExactResult> {
    let perm = assignment_exhaustive(c)?;
    Ok(ExactResult { cost: assignment_cost(c, &perm), plan: permutation_plan(&perm) })
}

/// Tolerance on the L1 marginal residual of [`entropic_reference`].
pub const ENTROPIC_TOL: f64 = 1e-12;
const ENTROPIC_MAX_ITER: usize = 1_000_000;

fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + it.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Entropic OT with kernel `exp(−C/ε)`, solved by log-domain Sinkhorn until the L1
/// marginal residual is at most `1e-12`. Small `ε` is reached by annealing from the
/// cost range down, warm-starting the dual potentials. Zero-weight rows and columns
/// stay empty.
pub fn entropic_reference(c: &Array2<f64>, a: &Marginal, b: &Marginal, epsilon_reg: f64) -> Result<ExactResult> {
    let (n, m) = c.dim();
    if a.len() != n || b.len() != m {
        return Err(OtError::shape(format!("cost is {n}x{m}, marginals have lengths {} and {}", a.len(), b.len())));
    }
    if !(epsilon_reg > 0.0 && epsilon_reg.is_finite()) {
        return Err(OtError::invalid(format!("epsilon must be positive, got {epsilon_reg}")));
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(OtError::invalid("cost entries must be finite"));
    }
    let la: Vec<f64> = a.view().iter().map(|x| x.ln()).collect();
    let lb: Vec<f64> = b.view().iter().map(|x| x.ln()).collect();
    let range = c.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let mut schedule = Vec::new();
    let mut eps = range.max(epsilon_reg);
    while eps > epsilon_reg {
        schedule.push(eps);
        eps /= 2.0;
    }
    schedule.push(epsilon_reg);

    // Dual potentials in cost units: P_ij = exp((phi_i + psi_j − C_ij)/ε).
    let mut phi = vec![0.0; n];
    let mut psi = vec![0.0; m];
    let plan = |phi: &[f64], psi: &[f64], eps: f64| {
        Array2::from_shape_fn((n, m), |(i, j)| ((phi[i] + psi[j] - c[[i, j]]) / eps).exp())
    };
    let mut residual = f64::INFINITY;
    let mut iters = 0;
    for (stage, &eps) in schedule.iter().enumerate() {
        let last = stage + 1 == schedule.len();
        let tol = if last { ENTROPIC_TOL } else { 1e-6 };
        loop {
            iters += 1;
            for i in 0..n {
                phi[i] = if la[i] == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    eps * (la[i] - log_sum_exp((0..m).map(|j| (psi[j] - c[[i, j]]) / eps)))
                };
            }
            for j in 0..m {
                psi[j] = if lb[j] == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    eps * (lb[j] - log_sum_exp((0..n).map(|i| (phi[i] - c[[i, j]]) / eps)))
                };
            }
            if iters % 10 == 0 {
                let p = plan(&phi, &psi, eps);
                residual = p.rows().into_iter().zip(a.view()).map(|(r, t)| (r.sum() - t).abs()).sum();
                if residual <= tol {
                    if last {
                        return Ok(ExactResult { cost: (&p * c).sum(), plan: p });
                    }
                    break;
                }
            }
            if iters >= ENTROPIC_MAX_ITER {
                let eps = *schedule.last().expect("non-empty schedule");
                let partial = ScalingResult {
                    scaled: plan(&phi, &psi, eps),
                    u: Array1::from_iter(phi.iter().map(|x| (x / eps).exp())),
                    v: Array1::from_iter(psi.iter().map(|x| (x / eps).exp())),
                    iters,
                    final_residual: residual,
                };
                return Err(OtError::NotConverged { residual, iters, partial: Box::new(partial) });
            }
        }
    }
    unreachable!("the final stage either returns or errors")
}

/// `Σ_{i,j,k,l} (A_ik − B_jl)² P_ij P_kl` by a direct quadruple loop.
pub fn brute_gw_cost(a: &Array2<f64>, b: &Array2<f64>, p: &Array2<f64>) -> Result<f64> {
    let (n, m) = p.dim();
    if a.dim() != (n, n) || b.dim() != (m, m) {
        return Err(OtError::shape(format!("A is {:?}, B is {:?}, P is {n}x{m}", a.dim(), b.dim())));
    }
    if n > BRUTE_GW_MAX || m > BRUTE_GW_MAX {
        return Err(OtError::TooLarge(format!("quadruple loop limited to {BRUTE_GW_MAX} per side, got {n}x{m}")));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            for k in 0..n {
                for l in 0..m {
                    let d = a[[i, k]] - b[[j, l]];
                    total += d * d * p[[i, j]] * p[[k, l]];
                }
            }
        }
    }
    Ok(total)
}
