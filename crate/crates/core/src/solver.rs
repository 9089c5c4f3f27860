//! The FRLC driver: initialization, alternating factor-relaxation and latent-coupling
//! steps, and convergence monitoring.

use std::time::Instant;

use ndarray::{Array1, Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::CostSpec;
use crate::error::{OtError, Result};
use crate::lc::{marginal_residuals, LcFactors, Marginal};
use crate::objectives::{gibbs_kernel, objective_value, qr_step, t_step, Contractions};
use crate::problem::{Mode, Objective, ProblemSpec};
use crate::projections::{accept_partial, relaxed_newton, sinkhorn, sinkhorn_newton_log, sr_right_projection, unbalanced_projection_split, ScalingResult};

/// Tolerance and sweep cap for the Sinkhorn calls inside the initializers.
const INIT_DELTA: f64 = 1e-13;
const INIT_MAX_ITER: usize = 10_000;
/// Mass added to every entry of the structured rank-2 latent coupling before it is
/// re-projected, so multiplicative updates can move mass into every cell.
const RANK2_FILL: f64 = 1e-8;
/// Entries of `T` that underflowed to zero are lifted to this value before the T step.
/// In exact arithmetic the multiplicative updates never produce zeros, and a zero entry
/// could never be revived, which can leave no coupling of the new inner marginals on
/// the remaining support. The T kernel itself is formed in log space for the same
/// reason.
const T_FLOOR: f64 = 1e-300;
/// Newton steps allowed once Sinkhorn on a latent kernel has stalled.
const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub factors: LcFactors,
    /// Objective value after each outer iteration.
    pub cost_trace: Vec<f64>,
    /// Δ criterion after each outer iteration.
    pub delta_trace: Vec<f64>,
    pub iters: usize,
    pub left_residual: f64,
    pub right_residual: f64,
    /// Seconds.
    pub wall_time: f64,
    pub seed_used: u64,
    /// Whether the Δ criterion fired before `max_iter`.
    pub converged: bool,
    /// Inner projections that hit their iteration cap (their partial output was used).
    pub inner_not_converged: usize,
}

impl SolveReport {
    pub fn final_cost(&self) -> f64 {
        self.cost_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Uniform inner marginal of length `r` carrying `mass`.
fn uniform_with_mass(r: usize, mass: f64) -> Marginal {
    Marginal::new(Array1::from_elem(r, mass / r as f64)).expect("non-negative mass")
}

fn scaled(m: &Marginal, factor: f64) -> Marginal {
    Marginal::new(m.as_array() * factor).expect("non-negative scaling")
}

/// Sinkhorn projection that tolerates slow convergence; the initializers only need a
/// feasible starting point.
fn project_init(k: &Array2<f64>, a: &Marginal, b: &Marginal) -> Result<Array2<f64>> {
    let tol = INIT_DELTA * a.mass().max(f64::MIN_POSITIVE);
    Ok(accept_partial(sinkhorn(k, a, b, tol, INIT_MAX_ITER))?.0.scaled)
}

/// Balanced projection of a latent kernel given by its entrywise logarithm: Sinkhorn
/// first, then Newton on the dual (warm-started from the Sinkhorn scalings) if Sinkhorn
/// stalls or the exponentiated kernel has a row or column that underflowed. Latent
/// kernels become nearly degenerate after a few mirror steps, which is exactly where
/// Sinkhorn crawls.
fn project_latent(lk: &Array2<f64>, rows: &Marginal, cols: &Marginal, delta: f64, max_iter: usize) -> Result<(ScalingResult, bool)> {
    let shift = lk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lk = lk.mapv(|x| x - shift);
    let warm = match sinkhorn(&lk.mapv(f64::exp), rows, cols, delta, max_iter) {
        Ok(r) => return Ok((r, true)),
        Err(OtError::NotConverged { partial, .. }) => Some(partial),
        Err(OtError::NonPositiveKernel(_)) => None,
        Err(e) => return Err(e),
    };
    let warm_lv = warm.as_ref().map(|p| p.v.mapv(f64::ln));
    match sinkhorn_newton_log(&lk, rows, cols, warm_lv.as_ref(), delta, NEWTON_MAX_ITER) {
        Ok(mut r) => {
            r.iters += warm.map_or(0, |p| p.iters);
            Ok((r, true))
        }
        Err(OtError::NotConverged { partial: newton, .. }) => match warm {
            Some(p) if p.final_residual <= newton.final_residual => Ok((*p, false)),
            _ => Ok((*newton, false)),
        },
        Err(OtError::DegenerateMarginal { .. }) if warm.is_some() => Ok((*warm.expect("checked"), false)),
        Err(e) => Err(e),
    }
}

/// Latent coupling between the inner marginals of `q` and `r`. Rows are exact; the
/// column target is rescaled to the row mass if the two differ.
fn project_t(lk: &Array2<f64>, g_q: &Marginal, g_r: &Marginal, delta: f64, max_iter: usize) -> Result<(ScalingResult, bool)> {
    let target = scaled(g_r, g_q.mass() / g_r.mass());
    project_latent(lk, g_q, &target, delta, max_iter)
}

/// Same with the columns exact (used when only the right marginal is tight).
fn project_t_columns(
    lk: &Array2<f64>,
    g_q: &Marginal,
    g_r: &Marginal,
    delta: f64,
    max_iter: usize,
) -> Result<(ScalingResult, bool)> {
    let target = scaled(g_q, g_r.mass() / g_q.mass());
    let (r, ok) = project_latent(&lk.t().to_owned(), g_r, &target, delta, max_iter)?;
    Ok((
        ScalingResult { scaled: r.scaled.reversed_axes(), u: r.v, v: r.u, iters: r.iters, final_residual: r.final_residual },
        ok,
    ))
}

/// `ln(T ⊙ exp(−step·∇_T))` with `T` floored at [`T_FLOOR`].
fn log_t_kernel(t: &Array2<f64>, dt: &Array2<f64>, step: f64) -> Array2<f64> {
    Zip::from(t).and(dt).map_collect(|&x, &d| x.max(T_FLOOR).ln() - step * d)
}

/// Random full-rank initialization: `Q ∈ Π(a, 1/r₁)`, `R ∈ Π(b, 1/r₂)`, `T ∈ Π(g_Q, g_R)`,
/// each obtained by Sinkhorn on `exp(U[0,1])` kernels drawn from the seeded generator.
pub fn initialize_couplings(a: &Marginal, b: &Marginal, r1: usize, r2: usize, seed: u64) -> Result<LcFactors> {
    let (n, m) = (a.len(), b.len());
    if r1 == 0 || r2 == 0 || r1 > n || r2 > m {
        return Err(OtError::invalid(format!("ranks ({r1}, {r2}) must lie in 1..={n} and 1..={m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kernel = |rows: usize, cols: usize| Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>().exp());
    let kq = kernel(n, r1);
    let kr = kernel(m, r2);
    let kt = kernel(r1, r2);
    let q = project_init(&kq, a, &uniform_with_mass(r1, a.mass()))?;
    let r = project_init(&kr, b, &uniform_with_mass(r2, b.mass()))?;
    let partial = LcFactors::new(q, r, Array2::zeros((r1, r2)))?;
    let g_r = scaled(partial.g_r(), partial.g_q().mass() / partial.g_r().mass());
    let t = project_init(&kt, partial.g_q(), &g_r)?;
    let (q, r, _) = partial.into_parts();
    LcFactors::new(q, r, t)
}

/// Rank-two sub-coupling `λ·a₁g₁ᵀ + (1−λ)·a₂g₂ᵀ` with row sums `a` and column sums `g`.
fn rank2_factor(a: &Marginal, g: &Marginal) -> Array2<f64> {
    let (n, r) = (a.len(), g.len());
    let lambda = a.min().min(g.min()) / 2.0;
    let ramp = |k: usize| {
        let v = Array1::from_iter((1..=k).map(|i| i as f64));
        let s = v.sum();
        v / s
    };
    let (a1, g1) = (ramp(n), ramp(r));
    let mass = a.mass();
    let a2 = (a.as_array() - &(&a1 * (lambda * mass))) / (1.0 - lambda);
    let g2 = (g.as_array() - &(&g1 * (lambda * mass))) / (1.0 - lambda);
    Array2::from_shape_fn((n, r), |(i, k)| lambda * mass * a1[i] * g1[k] + (1.0 - lambda) * a2[i] * g2[k] / mass)
}

/// Deterministic rank-two initialization with uniform inner marginals.
///
/// `Q` and `R` are rank-two sub-couplings; `T` starts from the diagonal (square case) or
/// the north-west-corner coupling of the inner marginals, filled with a small uniform
/// mass and re-projected to `Π(g_Q, g_R)`.
pub fn rank2_init(a: &Marginal, b: &Marginal, r1: usize, r2: usize, c: &CostSpec) -> Result<LcFactors> {
    let (n, m) = (a.len(), b.len());
    if r1 < 2 || r2 < 2 {
        return Err(OtError::InvalidRank(r1.min(r2)));
    }
    if r1 > n || r2 > m {
        return Err(OtError::invalid(format!("ranks ({r1}, {r2}) exceed problem size ({n}, {m})")));
    }
    c.check_shape(n, m)?;
    let mass = a.mass();
    let g_q = uniform_with_mass(r1, mass);
    let g_r = uniform_with_mass(r2, mass);
    let q = rank2_factor(a, &g_q);
    let r = rank2_factor(&scaled(b, mass / b.mass()), &g_r);
    let mut t = north_west_corner(&g_q, &g_r);
    t.mapv_inplace(|x| x + RANK2_FILL * mass);
    let f = LcFactors::new(q, r, Array2::zeros((r1, r2)))?;
    let t = project_init(&t, f.g_q(), &scaled(f.g_r(), f.g_q().mass() / f.g_r().mass()))?;
    let (q, r, _) = f.into_parts();
    LcFactors::new(q, r, t)
}

/// North-west-corner coupling of two equal-mass marginals (diagonal when both are
/// the same uniform vector).
fn north_west_corner(a: &Marginal, b: &Marginal) -> Array2<f64> {
    let mut t = Array2::zeros((a.len(), b.len()));
    let mut ra = a.as_array().clone();
    let mut rb = b.as_array().clone();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let x = ra[i].min(rb[j]);
        t[[i, j]] = x;
        ra[i] -= x;
        rb[j] -= x;
        // Compare against a relative tolerance so rounding does not shift the staircase.
        let eps = 1e-12 * a.mass();
        if ra[i] <= eps {
            i += 1;
        }
        if rb[j] <= eps {
            j += 1;
        }
    }
    t
}

/// `‖ΔQ‖²/γ_qr² + ‖ΔR‖²/γ_qr² + ‖ΔT‖²/γ_t²`.
pub fn delta_criterion(prev: &LcFactors, curr: &LcFactors, gamma_qr: f64, gamma_t: f64) -> f64 {
    let sq = |x: &Array2<f64>, y: &Array2<f64>| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    (sq(prev.q(), curr.q()) + sq(prev.r(), curr.r())) / (gamma_qr * gamma_qr) + sq(prev.t(), curr.t()) / (gamma_t * gamma_t)
}

/// Run FRLC from `init` (or a seeded random initialization).
pub fn frlc_solve(p: &ProblemSpec, c: &CostSpec, init: Option<LcFactors>) -> Result<SolveReport> {
    let start = Instant::now();
    p.validate()?;
    let (n, m) = (p.n(), p.m());
    c.check_shape(n, m)?;
    if p.objective.needs_linear() && c.linear().is_none() {
        return Err(OtError::MissingLinearCost);
    }
    if p.objective.needs_intra() && c.intra().is_none() {
        return Err(OtError::MissingIntraCost);
    }
    let mut f = match init {
        Some(f) => {
            if f.plan_shape() != (n, m) || f.ranks() != (p.r1, p.r2) {
                return Err(OtError::shape(format!(
                    "initial factors describe {:?} with ranks {:?}, problem is {:?} with ranks ({}, {})",
                    f.plan_shape(),
                    f.ranks(),
                    (n, m),
                    p.r1,
                    p.r2
                )));
            }
            f
        }
        None => {
            // Relaxed problems may have unequal masses; start from a coupling of `a` with
            // `b` rescaled to the same mass and let the projections pull it toward `b`.
            let b0 = scaled(&p.b, p.a.mass() / p.b.mass());
            initialize_couplings(&p.a, &b0, p.r1, p.r2, p.seed)?
        }
    };
    f.check_inner_marginals()?;

    let mut x = f.inner_matrix()?;
    let mut prep = Contractions::new(f.q(), f.r(), c, p.objective, true)?;
    let mut report = SolveReport {
        factors: f.clone(),
        cost_trace: Vec::new(),
        delta_trace: Vec::new(),
        iters: 0,
        left_residual: f64::NAN,
        right_residual: f64::NAN,
        wall_time: 0.0,
        seed_used: p.seed,
        converged: false,
        inner_not_converged: 0,
    };

    for iter in 1..=p.max_iter {
        // Factor-relaxation step on (Q, R).
        let (dq, dr) = prep.grad_qr(&f, &x);
        let gamma_qr = qr_step(&dq, &dr, p.gamma);
        let kq = gibbs_kernel(f.q(), &dq, gamma_qr);
        let kr = gibbs_kernel(f.r(), &dr, gamma_qr);
        let (q_res, r_res) = project_factors(p, &kq, &kr, gamma_qr, f.g_q(), f.g_r())?;
        report.inner_not_converged += usize::from(!q_res.1) + usize::from(!r_res.1);

        // T needs equal inner masses, and the plan does not change when a factor is
        // rescaled. A tight side fixes the plan's mass, so the relaxed factor is brought
        // to it; with both sides relaxed both move to the geometric mean of the two.
        // Otherwise the reduced-form costs and gradients see an outer marginal the plan
        // does not have.
        let (mut q_new, mut r_new) = (q_res.0.scaled, r_res.0.scaled);
        let (mq, mr) = (q_new.sum(), r_new.sum());
        match p.mode {
            Mode::Balanced => {}
            Mode::SemiRelaxedLeft => q_new *= mr / mq,
            Mode::SemiRelaxedRight => r_new *= mq / mr,
            Mode::Unbalanced => {
                let common = (mq * mr).sqrt();
                q_new *= common / mq;
                r_new *= common / mr;
            }
        }

        // Latent-coupling step on T between the new inner marginals.
        let moved = LcFactors::new(q_new, r_new, f.t().clone())?;
        moved.check_inner_marginals()?;
        let next_prep = Contractions::new(moved.q(), moved.r(), c, p.objective, true)?;
        let dt = next_prep.grad_t(&moved, &moved.inner_matrix()?);
        let gamma_t = t_step(&dt, p.gamma);
        let kt = log_t_kernel(f.t(), &dt, gamma_t);
        let (t_res, t_ok) = if p.mode == Mode::SemiRelaxedLeft {
            project_t_columns(&kt, moved.g_q(), moved.g_r(), p.delta, p.max_inner_balanced)?
        } else {
            project_t(&kt, moved.g_q(), moved.g_r(), p.delta, p.max_inner_balanced)?
        };
        report.inner_not_converged += usize::from(!t_ok);
        let (q, r, _) = moved.into_parts();
        let next = LcFactors::new(q, r, t_res.scaled)?;
        next.check_inner_marginals()?;

        let delta = delta_criterion(&f, &next, gamma_qr, gamma_t);
        f = next;
        x = f.inner_matrix()?;
        prep = next_prep;
        let cost = if p.mode == Mode::Balanced || p.objective == Objective::Wasserstein {
            prep.value(&x)
        } else {
            objective_value(&f, c, p.objective, p.mode)?
        };
        report.cost_trace.push(cost);
        report.delta_trace.push(delta);
        report.iters = iter;
        if delta == 0.0 || (delta <= p.epsilon && iter >= p.min_iter) {
            report.converged = true;
            break;
        }
    }

    let (left, right) = marginal_residuals(&f, &p.a, &p.b)?;
    report.left_residual = left;
    report.right_residual = right;
    report.factors = f;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

type Projected = (ScalingResult, bool);

/// Mode-dependent projection pair for the Q and R kernels.
/// Finish a factor projection whose scaling iteration hit `max_inner_relaxed` with
/// Newton on the dual, warm-started from the partial scalings. Near-balanced relaxed
/// projections (`τ·γ_k ≫ 1`) on sharpened kernels converge too slowly for the sweep
/// cap, and a truncated projection leaves the inner marginal near the kernel's own
/// column sums instead of near `g_prev`, which lets the inner marginals collapse.
fn polish_relaxed(
    sweeps: Result<ScalingResult>,
    k: &Array2<f64>,
    gamma_k: f64,
    taus: (f64, f64),
    rows: &Marginal,
    cols: &Marginal,
    delta: f64,
) -> Result<Projected> {
    let partial = match sweeps {
        Ok(r) => return Ok((r, true)),
        Err(OtError::NotConverged { partial, .. }) => partial,
        Err(e) => return Err(e),
    };
    let warm = (partial.u.mapv(f64::ln), partial.v.mapv(f64::ln));
    match relaxed_newton(k, gamma_k, taus, rows, cols, Some((&warm.0, &warm.1)), delta, NEWTON_MAX_ITER) {
        Ok(r) => Ok((r, true)),
        Err(OtError::NotConverged { partial: newton, .. }) => Ok((*newton, false)),
        Err(OtError::DegenerateMarginal { .. }) | Err(OtError::NonPositiveKernel(_)) => Ok((*partial, false)),
        Err(e) => Err(e),
    }
}

fn project_factors(
    p: &ProblemSpec,
    kq: &Array2<f64>,
    kr: &Array2<f64>,
    gamma_k: f64,
    g_q: &Marginal,
    g_r: &Marginal,
) -> Result<(Projected, Projected)> {
    let inner = p.max_inner_relaxed;
    let sr = |k: &Array2<f64>, outer: &Marginal, g: &Marginal| {
        let sweeps = sr_right_projection(k, gamma_k, p.tau, outer, g, p.delta, inner);
        polish_relaxed(sweeps, k, gamma_k, (f64::INFINITY, p.tau), outer, g, p.delta)
    };
    // Relaxed outer marginals use `tau2`; inner marginals always use `tau`.
    let un = |k: &Array2<f64>, outer: &Marginal, g: &Marginal| {
        let sweeps = unbalanced_projection_split(k, gamma_k, (p.tau2, p.tau), outer, g, p.delta, inner);
        polish_relaxed(sweeps, k, gamma_k, (p.tau2, p.tau), outer, g, p.delta)
    };
    Ok(match p.mode {
        Mode::Balanced => (sr(kq, &p.a, g_q)?, sr(kr, &p.b, g_r)?),
        Mode::Unbalanced => (un(kq, &p.a, g_q)?, un(kr, &p.b, g_r)?),
        Mode::SemiRelaxedLeft => (un(kq, &p.a, g_q)?, sr(kr, &p.b, g_r)?),
        Mode::SemiRelaxedRight => (sr(kq, &p.a, g_q)?, un(kr, &p.b, g_r)?),
    })
}
