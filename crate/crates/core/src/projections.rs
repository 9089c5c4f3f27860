//! Scaling projections: balanced Sinkhorn, semi-relaxed (right / left) and unbalanced.
//!
//! Every routine returns `diag(u)·K·diag(v)` together with the scalings. Iterations run
//! in the plain domain; if a scaling leaves `[1e-280, 1e280]` the loop restarts from
//! the current scalings in the log domain.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};

use crate::error::{OtError, Result};
use crate::lc::Marginal;

const SCALE_BOUND: f64 = 1e280;
const KV_FLOOR: f64 = 1e-300;
/// Largest change of a log potential in one Newton step.
const NEWTON_STEP_CAP: f64 = 20.0;
const NEWTON_HALVINGS: usize = 40;

/// Output of a scaling projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingResult {
    pub scaled: Array2<f64>,
    pub u: Array1<f64>,
    pub v: Array1<f64>,
    pub iters: usize,
    pub final_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum StopRule {
    /// `‖u⊙Kv − a‖₁ + ‖v⊙Kᵀu − b‖₁ ≤ δ`.
    MarginalL1,
    /// `γ⁻¹·max(‖log ũ/u‖∞, ‖log ṽ/v‖∞) < δ`.
    LogChange { gamma: f64 },
}

/// One generic scaling loop: `u ← (a/Kv)^pu`, `v ← (b/Kᵀu)^pv`.
#[derive(Clone, Copy)]
struct Scaling<'a> {
    k: &'a Array2<f64>,
    a: ArrayView1<'a, f64>,
    b: ArrayView1<'a, f64>,
    pu: f64,
    pv: f64,
    rule: StopRule,
    /// Apply one extra exact `u ← a/Kv` before returning.
    terminal_u: bool,
    delta: f64,
    max_iter: usize,
}

/// Validate shapes and entries. A row (column) with no kernel mass is an error only when
/// its side is tight; on a relaxed side it simply stays empty.
fn check_kernel(
    k: &Array2<f64>,
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    rows_tight: bool,
    cols_tight: bool,
) -> Result<()> {
    if k.nrows() != a.len() || k.ncols() != b.len() {
        return Err(OtError::shape(format!(
            "kernel is {}x{}, marginals have lengths {} and {}",
            k.nrows(),
            k.ncols(),
            a.len(),
            b.len()
        )));
    }
    if k.is_empty() {
        return Err(OtError::shape("empty kernel"));
    }
    if let Some(x) = k.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(OtError::NonPositiveKernel(format!("entry {x} is negative or not finite")));
    }
    for (axis, target, name, tight) in [(Axis(1), a, "row", rows_tight), (Axis(0), b, "column", cols_tight)] {
        if !tight {
            continue;
        }
        let sums = k.sum_axis(axis);
        if let Some((i, _)) = sums.iter().zip(target).enumerate().find(|(_, (s, t))| **s < KV_FLOOR && **t > 0.0) {
            return Err(OtError::NonPositiveKernel(format!("{name} {i} carries no mass but has a positive target")));
        }
    }
    Ok(())
}

/// `(target / denom)^p` with the conventions `0/0 → 0` and `x^0 = 1`.
fn ratio_pow(target: f64, denom: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else if target == 0.0 {
        0.0
    } else {
        let r = target / denom;
        if p == 1.0 {
            r
        } else {
            r.powf(p)
        }
    }
}

fn out_of_range(x: &Array1<f64>) -> bool {
    x.iter().any(|&s| s != 0.0 && !(s > 1.0 / SCALE_BOUND && s < SCALE_BOUND))
}

fn max_log_change(old: &Array1<f64>, new: &Array1<f64>) -> f64 {
    old.iter().zip(new).fold(0.0, |acc, (o, n)| {
        if *o == *n {
            acc
        } else {
            acc.max((o.ln() - n.ln()).abs())
        }
    })
}

fn l1_gap(scale: &Array1<f64>, prod: &Array1<f64>, target: ArrayView1<'_, f64>) -> f64 {
    let mut s = 0.0;
    for ((x, p), t) in scale.iter().zip(prod).zip(target) {
        s += (x * p - t).abs();
    }
    s
}

fn scale_kernel(k: &Array2<f64>, u: &Array1<f64>, v: &Array1<f64>) -> Array2<f64> {
    let mut out = k.clone();
    Zip::from(out.rows_mut()).and(u).for_each(|mut row, &ui| {
        Zip::from(&mut row).and(v).for_each(|x, &vj| *x = *x * ui * vj);
    });
    out
}

/// Zero the target of rows whose kernel mass vanishes, so a relaxed side drops them.
fn drop_dead(target: ArrayView1<'_, f64>, sums: Array1<f64>, relaxed: bool) -> Array1<f64> {
    Zip::from(&target).and(&sums).map_collect(|&t, &s| if relaxed && s < KV_FLOOR { 0.0 } else { t })
}

impl Scaling<'_> {
    fn run(&self) -> Result<ScalingResult> {
        check_kernel(self.k, self.a, self.b, self.pu == 1.0, self.pv == 1.0)?;
        let a = drop_dead(self.a, self.k.sum_axis(Axis(1)), self.pu < 1.0);
        let b = drop_dead(self.b, self.k.sum_axis(Axis(0)), self.pv < 1.0);
        Scaling { a: a.view(), b: b.view(), ..*self }.run_checked()
    }

    fn run_checked(&self) -> Result<ScalingResult> {
        let k = self.k;
        let mut u = Array1::<f64>::ones(k.nrows());
        let mut v = Array1::<f64>::ones(k.ncols());
        let mut kv = k.dot(&v);
        let mut residual = f64::INFINITY;
        let mut converged = false;
        let mut iters = 0;
        while iters < self.max_iter {
            iters += 1;
            let u_old = u.clone();
            let v_old = v.clone();
            if kv.iter().zip(self.a).any(|(x, t)| *x < KV_FLOOR && *t > 0.0) {
                return self.run_log(u_old.mapv(f64::ln), v_old.mapv(f64::ln), iters - 1);
            }
            Zip::from(&mut u).and(&kv).and(self.a).for_each(|u, &kv, &a| *u = ratio_pow(a, kv, self.pu));
            let ktu = k.t().dot(&u);
            if ktu.iter().zip(self.b).any(|(x, t)| *x < KV_FLOOR && *t > 0.0) {
                return self.run_log(u_old.mapv(f64::ln), v_old.mapv(f64::ln), iters - 1);
            }
            Zip::from(&mut v).and(&ktu).and(self.b).for_each(|v, &ktu, &b| *v = ratio_pow(b, ktu, self.pv));
            if out_of_range(&u) || out_of_range(&v) {
                return self.run_log(u_old.mapv(f64::ln), v_old.mapv(f64::ln), iters - 1);
            }
            kv = k.dot(&v);
            residual = match self.rule {
                StopRule::MarginalL1 => l1_gap(&u, &kv, self.a) + l1_gap(&v, &ktu, self.b),
                StopRule::LogChange { gamma } => max_log_change(&u_old, &u).max(max_log_change(&v_old, &v)) / gamma,
            };
            let done = match self.rule {
                StopRule::MarginalL1 => residual <= self.delta,
                StopRule::LogChange { .. } => residual < self.delta,
            };
            if done {
                converged = true;
                break;
            }
        }
        if self.terminal_u {
            if kv.iter().zip(self.a).any(|(x, t)| *x < KV_FLOOR && *t > 0.0) {
                return self.run_log(u.mapv(f64::ln), v.mapv(f64::ln), iters);
            }
            Zip::from(&mut u).and(&kv).and(self.a).for_each(|u, &kv, &a| *u = ratio_pow(a, kv, 1.0));
            if self.rule == StopRule::MarginalL1 {
                residual = l1_gap(&v, &k.t().dot(&u), self.b);
            }
        }
        let out = ScalingResult { scaled: scale_kernel(k, &u, &v), u, v, iters, final_residual: residual };
        self.finish(out, converged)
    }

    fn finish(&self, out: ScalingResult, converged: bool) -> Result<ScalingResult> {
        if converged {
            Ok(out)
        } else {
            Err(OtError::NotConverged { residual: out.final_residual, iters: out.iters, partial: Box::new(out) })
        }
    }

    /// Same iteration on `log u`, `log v` with log-sum-exp contractions.
    fn run_log(&self, mut lu: Array1<f64>, mut lv: Array1<f64>, done: usize) -> Result<ScalingResult> {
        let lk = self.k.mapv(f64::ln);
        let la = self.a.mapv(f64::ln);
        let lb = self.b.mapv(f64::ln);
        let row_lse = |lv: &Array1<f64>| -> Array1<f64> { lk.rows().into_iter().map(|row| lse(row, lv.view())).collect() };
        let col_lse = |lu: &Array1<f64>| -> Array1<f64> { lk.columns().into_iter().map(|col| lse(col, lu.view())).collect() };
        let log_update = |target: &Array1<f64>, lkx: &Array1<f64>, p: f64| -> Array1<f64> {
            Zip::from(target).and(lkx).map_collect(|&t, &l| {
                if p == 0.0 {
                    0.0
                } else if t == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    p * (t - l)
                }
            })
        };
        let gap = |ls: &Array1<f64>, lp: &Array1<f64>, target: ArrayView1<'_, f64>| -> f64 {
            ls.iter().zip(lp).zip(target).map(|((s, p), t)| ((s + p).exp() - t).abs()).sum()
        };
        let log_change = |old: &Array1<f64>, new: &Array1<f64>| -> f64 {
            old.iter().zip(new).fold(0.0, |acc, (o, n)| if o == n { acc } else { acc.max((o - n).abs()) })
        };

        let mut residual = f64::INFINITY;
        let mut converged = false;
        let mut iters = done;
        let mut lkv = row_lse(&lv);
        while iters < self.max_iter {
            iters += 1;
            let lu_old = lu.clone();
            let lv_old = lv.clone();
            lu = log_update(&la, &lkv, self.pu);
            let lktu = col_lse(&lu);
            lv = log_update(&lb, &lktu, self.pv);
            lkv = row_lse(&lv);
            residual = match self.rule {
                StopRule::MarginalL1 => gap(&lu, &lkv, self.a) + gap(&lv, &lktu, self.b),
                StopRule::LogChange { gamma } => log_change(&lu_old, &lu).max(log_change(&lv_old, &lv)) / gamma,
            };
            let stop = match self.rule {
                StopRule::MarginalL1 => residual <= self.delta,
                StopRule::LogChange { .. } => residual < self.delta,
            };
            if stop {
                converged = true;
                break;
            }
        }
        if self.terminal_u {
            lu = log_update(&la, &lkv, 1.0);
            if self.rule == StopRule::MarginalL1 {
                residual = gap(&lv, &col_lse(&lu), self.b);
            }
        }
        let mut scaled = lk.clone();
        Zip::from(scaled.rows_mut()).and(&lu).for_each(|mut row, &lui| {
            Zip::from(&mut row).and(&lv).for_each(|x, &lvj| *x = (*x + lui + lvj).exp());
        });
        let out = ScalingResult { scaled, u: lu.mapv(f64::exp), v: lv.mapv(f64::exp), iters, final_residual: residual };
        self.finish(out, converged)
    }
}

fn lse(lk: ArrayView1<'_, f64>, lx: ArrayView1<'_, f64>) -> f64 {
    let m = lk.iter().zip(lx).map(|(a, b)| a + b).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + lk.iter().zip(lx).map(|(a, b)| (a + b - m).exp()).sum::<f64>().ln()
}

fn relaxed_exponent(gamma: f64, tau: f64) -> Result<f64> {
    if !(gamma > 0.0) || !(tau >= 0.0) || !gamma.is_finite() {
        return Err(OtError::invalid(format!("need gamma > 0 and tau >= 0, got gamma={gamma}, tau={tau}")));
    }
    if tau.is_infinite() {
        return Ok(1.0);
    }
    Ok(tau / (tau + 1.0 / gamma))
}

/// Balanced Sinkhorn scaling of `K` onto `Π(a, b)`.
///
/// A terminal `u` update makes the row sums exactly `a`; the column residual stays at
/// most the row residual of the last sweep, hence `≤ delta` on convergence.
pub fn sinkhorn(k: &Array2<f64>, a: &Marginal, b: &Marginal, delta: f64, max_iter: usize) -> Result<ScalingResult> {
    let (sa, sb) = (a.mass(), b.mass());
    if (sa - sb).abs() > 1e-8 * sa.max(sb).max(1e-300) {
        return Err(OtError::invalid(format!("marginal masses differ: {sa} vs {sb}")));
    }
    Scaling {
        k,
        a: a.view(),
        b: b.view(),
        pu: 1.0,
        pv: 1.0,
        rule: StopRule::MarginalL1,
        terminal_u: true,
        delta,
        max_iter,
    }
    .run()
}

/// Balanced projection by Newton's method on the entropic dual, warm-started from a
/// column scaling `v` when given (e.g. the partial output of [`sinkhorn`]).
///
/// Plain Sinkhorn crawls on kernels whose entries span hundreds of orders of magnitude
/// and whose dominant pattern disagrees with the marginals. Newton steps on the log
/// potentials, with an Armijo line search on the dual, converge in a handful of
/// iterations there. Each step solves an `(n+m−1)` square system, so this is meant for
/// small kernels such as the latent coupling. Both marginals must be positive. Rows are
/// made exact by a terminal row update.
pub fn sinkhorn_newton(
    k: &Array2<f64>,
    a: &Marginal,
    b: &Marginal,
    warm_v: Option<&Array1<f64>>,
    delta: f64,
    max_iter: usize,
) -> Result<ScalingResult> {
    check_kernel(k, a.view(), b.view(), true, true)?;
    let warm_lv = warm_v.map(|v| v.mapv(f64::ln));
    sinkhorn_newton_log(&k.mapv(f64::ln), a, b, warm_lv.as_ref(), delta, max_iter)
}

/// [`sinkhorn_newton`] from the entrywise logarithm of the kernel, for kernels whose
/// entries leave the floating-point range. `−∞` entries are structural zeros. The
/// returned `u` and `v` may overflow; the plan does not.
pub fn sinkhorn_newton_log(
    lk: &Array2<f64>,
    a: &Marginal,
    b: &Marginal,
    warm_lv: Option<&Array1<f64>>,
    delta: f64,
    max_iter: usize,
) -> Result<ScalingResult> {
    if lk.nrows() != a.len() || lk.ncols() != b.len() || lk.is_empty() {
        return Err(OtError::shape(format!(
            "log kernel is {}x{}, marginals have lengths {} and {}",
            lk.nrows(),
            lk.ncols(),
            a.len(),
            b.len()
        )));
    }
    if lk.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(OtError::NonPositiveKernel("log kernel has NaN or +inf entries".into()));
    }
    for m in [a, b] {
        if let Some((index, &value)) = m.view().iter().enumerate().find(|(_, x)| **x <= 0.0) {
            return Err(OtError::DegenerateMarginal { index, value });
        }
    }
    let (n, m) = lk.dim();
    let la = a.as_array().mapv(f64::ln);
    let lb = b.as_array().mapv(f64::ln);
    let row_update = |lv: &Array1<f64>| -> Array1<f64> {
        Zip::from(&la).and(lk.rows()).map_collect(|&t, row| t - lse(row, lv.view()))
    };
    let col_update = |lu: &Array1<f64>| -> Array1<f64> {
        Zip::from(&lb).and(lk.columns()).map_collect(|&t, col| t - lse(col, lu.view()))
    };
    let plan = |lu: &Array1<f64>, lv: &Array1<f64>| -> Array2<f64> {
        Array2::from_shape_fn((n, m), |(i, j)| (lk[[i, j]] + lu[i] + lv[j]).exp())
    };
    let dual = |lu: &Array1<f64>, lv: &Array1<f64>, p: &Array2<f64>| -> f64 {
        lu.dot(&a.as_array().view()) + lv.dot(&b.as_array().view()) - p.sum()
    };

    let finite = |x: &Array1<f64>| x.iter().all(|v| v.is_finite());
    let mut lv = match warm_lv {
        Some(lv) if lv.len() == m && finite(lv) => lv.clone(),
        _ => Array1::zeros(m),
    };
    let mut lu = row_update(&lv);
    lv = col_update(&lu);
    if !finite(&lu) || !finite(&lv) {
        return Err(OtError::NonPositiveKernel("a row or column of the kernel is entirely zero".into()));
    }

    let mut p = plan(&lu, &lv);
    let mut residual = f64::INFINITY;
    let mut iters = 0;
    let mut converged = false;
    while iters < max_iter {
        let ra = a.as_array() - &p.sum_axis(Axis(1));
        let rb = b.as_array() - &p.sum_axis(Axis(0));
        residual = ra.iter().chain(rb.iter()).map(|x| x.abs()).sum();
        if residual <= delta {
            converged = true;
            break;
        }
        iters += 1;
        // The dual is invariant under (f + c, g − c); pin the last column potential.
        let dim = n + m - 1;
        let mut h = nalgebra::DMatrix::<f64>::zeros(dim, dim);
        let rows = p.sum_axis(Axis(1));
        let cols = p.sum_axis(Axis(0));
        for i in 0..n {
            h[(i, i)] = rows[i];
            for j in 0..m - 1 {
                h[(i, n + j)] = p[[i, j]];
                h[(n + j, i)] = p[[i, j]];
            }
        }
        for j in 0..m - 1 {
            h[(n + j, n + j)] = cols[j];
        }
        let grad = nalgebra::DVector::from_iterator(dim, ra.iter().chain(rb.iter().take(m - 1)).copied());
        // A tiny ridge keeps the system solvable when the plan has vanishing rows or
        // a disconnected support.
        let ridge = 1e-14 * h.diagonal().max();
        for d in 0..dim {
            h[(d, d)] += ridge;
        }
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => match h.lu().solve(&grad) {
                Some(s) => s,
                None => break,
            },
        };
        // Far from the optimum the Newton direction is huge along nearly empty rows and
        // columns; cap it in log space before the line search.
        let step = step.scale(NEWTON_STEP_CAP / step.amax().max(NEWTON_STEP_CAP));
        let slope: f64 = step.dot(&grad);
        let base = dual(&lu, &lv, &p);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..NEWTON_HALVINGS {
            let nu = Array1::from_shape_fn(n, |i| lu[i] + t * step[i]);
            let nv = Array1::from_shape_fn(m, |j| if j + 1 < m { lv[j] + t * step[n + j] } else { lv[j] });
            let np = plan(&nu, &nv);
            let val = dual(&nu, &nv, &np);
            if val.is_finite() && val >= base + 1e-4 * t * slope {
                lu = nu;
                lv = nv;
                p = np;
                accepted = true;
                break;
            }
            t /= 2.0;
        }
        if !accepted {
            // A Sinkhorn sweep always ascends the dual.
            lu = row_update(&lv);
            lv = col_update(&lu);
            p = plan(&lu, &lv);
        }
    }
    lu = row_update(&lv);
    let p = plan(&lu, &lv);
    if converged {
        residual = (b.as_array() - &p.sum_axis(Axis(0))).iter().map(|x| x.abs()).sum();
    }
    let out = ScalingResult { scaled: p, u: lu.mapv(f64::exp), v: lv.mapv(f64::exp), iters, final_residual: residual };
    if converged {
        Ok(out)
    } else {
        Err(OtError::NotConverged { residual: out.final_residual, iters, partial: Box::new(out) })
    }
}

/// Semi-relaxed projection with the row marginal `a` tight and the column marginal
/// pulled toward `g_prev` with KL weight `tau`.
pub fn sr_right_projection(
    k: &Array2<f64>,
    gamma: f64,
    tau: f64,
    a: &Marginal,
    g_prev: &Marginal,
    delta: f64,
    max_iter: usize,
) -> Result<ScalingResult> {
    let p = relaxed_exponent(gamma, tau)?;
    Scaling {
        k,
        a: a.view(),
        b: g_prev.view(),
        pu: 1.0,
        pv: p,
        rule: StopRule::LogChange { gamma },
        terminal_u: true,
        delta,
        max_iter,
    }
    .run()
}

/// Mirror image of [`sr_right_projection`]: column marginal `b` tight, row marginal
/// pulled toward `g_prev`. Computed as the transpose of the right-relaxed projection
/// of `Kᵀ`, so the two are exact duals.
pub fn sr_left_projection(
    k: &Array2<f64>,
    gamma: f64,
    tau: f64,
    g_prev: &Marginal,
    b: &Marginal,
    delta: f64,
    max_iter: usize,
) -> Result<ScalingResult> {
    let kt = k.t().to_owned();
    let transpose = |r: ScalingResult| ScalingResult {
        scaled: r.scaled.reversed_axes(),
        u: r.v,
        v: r.u,
        iters: r.iters,
        final_residual: r.final_residual,
    };
    match sr_right_projection(&kt, gamma, tau, b, g_prev, delta, max_iter) {
        Ok(r) => Ok(transpose(r)),
        Err(OtError::NotConverged { residual, iters, partial }) => {
            Err(OtError::NotConverged { residual, iters, partial: Box::new(transpose(*partial)) })
        }
        Err(e) => Err(e),
    }
}

/// Unbalanced projection: both marginals pulled toward `(a, b)` with KL weight `tau`.
pub fn unbalanced_projection(
    k: &Array2<f64>,
    gamma: f64,
    tau: f64,
    a: &Marginal,
    b: &Marginal,
    delta: f64,
    max_iter: usize,
) -> Result<ScalingResult> {
    unbalanced_projection_split(k, gamma, (tau, tau), a, b, delta, max_iter)
}

/// Unbalanced projection with separate KL weights `(tau_rows, tau_cols)` on `a` and `b`.
pub fn unbalanced_projection_split(
    k: &Array2<f64>,
    gamma: f64,
    (tau_rows, tau_cols): (f64, f64),
    a: &Marginal,
    b: &Marginal,
    delta: f64,
    max_iter: usize,
) -> Result<ScalingResult> {
    Scaling {
        k,
        a: a.view(),
        b: b.view(),
        pu: relaxed_exponent(gamma, tau_rows)?,
        pv: relaxed_exponent(gamma, tau_cols)?,
        rule: StopRule::LogChange { gamma },
        terminal_u: false,
        delta,
        max_iter,
    }
    .run()
}

/// Newton's method on the entropic dual of a (semi-)relaxed projection, for kernels on
/// which the scaling iteration stalls.
///
/// Solves the same problem as [`sr_right_projection`] (`taus.0 = ∞`) or
/// [`unbalanced_projection_split`]: rows pulled toward `a` with KL weight `taus.0` and
/// columns toward `b` with weight `taus.1`, an infinite weight making that side tight.
/// The row block of the Hessian is diagonal, so each step eliminates it and solves an
/// `m×m` system; this suits tall kernels such as the factor kernels. Stops when the L1
/// norm of the dual gradient (the gap between each marginal of the plan and its
/// relaxed target) is at most `delta`. Tight rows are made exact by a terminal update.
/// `warm` holds `(ln u, ln v)` from a previous run, e.g. the scaling iteration.
pub fn relaxed_newton(
    k: &Array2<f64>,
    gamma: f64,
    taus: (f64, f64),
    a: &Marginal,
    b: &Marginal,
    warm: Option<(&Array1<f64>, &Array1<f64>)>,
    delta: f64,
    max_iter: usize,
) -> Result<ScalingResult> {
    let (pu, pv) = (relaxed_exponent(gamma, taus.0)?, relaxed_exponent(gamma, taus.1)?);
    if pu == 0.0 || pv == 0.0 {
        return Err(OtError::invalid("relaxed_newton needs positive KL weights"));
    }
    check_kernel(k, a.view(), b.view(), true, true)?;
    for m in [a, b] {
        if let Some((index, &value)) = m.view().iter().enumerate().find(|(_, x)| **x <= 0.0) {
            return Err(OtError::DegenerateMarginal { index, value });
        }
    }
    let (n, m) = k.dim();
    // The fixed point `v = (b/Kᵀu)^p` says the column sums equal `b·v^(−ρ)`, ρ = 1/p − 1.
    let (rho_u, rho_v) = (1.0 / pu - 1.0, 1.0 / pv - 1.0);
    let lk = k.mapv(f64::ln);
    let (a, b) = (a.as_array(), b.as_array());
    let target = |w: &Array1<f64>, l: &Array1<f64>, rho: f64| -> Array1<f64> {
        if rho == 0.0 {
            w.clone()
        } else {
            Zip::from(w).and(l).map_collect(|&w, &l| w * (-rho * l).exp())
        }
    };
    // ∫ of the target: `w·l` when tight, `−(w/ρ)(e^(−ρl) − 1)` when relaxed.
    let potential = |w: &Array1<f64>, l: &Array1<f64>, rho: f64| -> f64 {
        if rho == 0.0 {
            w.dot(l)
        } else {
            w.iter().zip(l).map(|(w, l)| -(w / rho) * (-rho * l).exp_m1()).sum()
        }
    };
    let plan = |lu: &Array1<f64>, lv: &Array1<f64>| -> Array2<f64> {
        Array2::from_shape_fn((n, m), |(i, j)| (lk[[i, j]] + lu[i] + lv[j]).exp())
    };
    let dual = |lu: &Array1<f64>, lv: &Array1<f64>, p: &Array2<f64>| -> f64 {
        potential(a, lu, rho_u) + potential(b, lv, rho_v) - p.sum()
    };

    let finite = |x: &Array1<f64>| x.iter().all(|v| v.is_finite());
    let (mut lu, mut lv) = match warm {
        Some((lu, lv)) if lu.len() == n && lv.len() == m && finite(lu) && finite(lv) => (lu.clone(), lv.clone()),
        _ => (Array1::zeros(n), Array1::zeros(m)),
    };
    let mut p = plan(&lu, &lv);
    let mut residual = f64::INFINITY;
    let mut iters = 0;
    let mut converged = false;
    while iters < max_iter {
        let (rows, cols) = (p.sum_axis(Axis(1)), p.sum_axis(Axis(0)));
        let (ta, tb) = (target(a, &lu, rho_u), target(b, &lv, rho_v));
        let gu = &ta - &rows;
        let gv = &tb - &cols;
        residual = gu.iter().chain(gv.iter()).map(|x| x.abs()).sum();
        if residual <= delta {
            converged = true;
            break;
        }
        iters += 1;
        // Negative Hessian [[D_u, P], [Pᵀ, D_v]] with D_u = diag(P1 + ρ_u·ã), D_v alike.
        let du = &rows + &(&ta * rho_u);
        let dv = &cols + &(&tb * rho_v);
        let mut scaled_p = p.clone();
        for (mut row, &d) in scaled_p.rows_mut().into_iter().zip(&du) {
            row /= d;
        }
        let mut schur = -p.t().dot(&scaled_p);
        for j in 0..m {
            schur[[j, j]] += dv[j];
        }
        let rhs = &gv - &scaled_p.t().dot(&gu);
        let ridge = 1e-14 * dv.iter().fold(0.0f64, |x, y| x.max(*y));
        let h = nalgebra::DMatrix::from_fn(m, m, |i, j| schur[[i, j]] + if i == j { ridge } else { 0.0 });
        let rhs = nalgebra::DVector::from_iterator(m, rhs.iter().copied());
        let step_v = match h.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => match h.lu().solve(&rhs) {
                Some(s) => s,
                None => break,
            },
        };
        let step_v = Array1::from_iter(step_v.iter().copied());
        let step_u = Zip::from(&gu).and(&p.dot(&step_v)).and(&du).map_collect(|g, pd, d| (g - pd) / d);
        let amax = step_u.iter().chain(step_v.iter()).fold(0.0f64, |x, y| x.max(y.abs()));
        let shrink = NEWTON_STEP_CAP / amax.max(NEWTON_STEP_CAP);
        let slope = shrink * (gu.dot(&step_u) + gv.dot(&step_v));
        let base = dual(&lu, &lv, &p);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..NEWTON_HALVINGS {
            let nu = &lu + &(&step_u * (t * shrink));
            let nv = &lv + &(&step_v * (t * shrink));
            let np = plan(&nu, &nv);
            let val = dual(&nu, &nv, &np);
            if val.is_finite() && val >= base + 1e-4 * t * slope {
                lu = nu;
                lv = nv;
                p = np;
                accepted = true;
                break;
            }
            t /= 2.0;
        }
        if !accepted {
            break;
        }
    }
    if rho_u == 0.0 {
        lu = Zip::from(a).and(lk.rows()).map_collect(|&t, row| t.ln() - lse(row, lv.view()));
        p = plan(&lu, &lv);
    }
    let out = ScalingResult { scaled: p, u: lu.mapv(f64::exp), v: lv.mapv(f64::exp), iters, final_residual: residual };
    if converged {
        Ok(out)
    } else {
        Err(OtError::NotConverged { residual, iters, partial: Box::new(out) })
    }
}

/// Take the best-effort output of a projection that ran out of iterations.
/// Returns the result and whether it converged.
pub fn accept_partial(r: Result<ScalingResult>) -> Result<(ScalingResult, bool)> {
    match r {
        Ok(r) => Ok((r, true)),
        Err(OtError::NotConverged { partial, .. }) => Ok((*partial, false)),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn marg(v: &[f64]) -> Marginal {
        Marginal::from_vec(v.to_vec()).unwrap()
    }

    fn random_kernel(seed: u64, n: usize, m: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, m), |_| rng.random_range(0.1..2.0))
    }

    fn max_abs_diff(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        (x - y).iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    #[test]
    fn sinkhorn_on_uniform_kernel() {
        let k = Array2::ones((2, 2));
        let h = marg(&[0.5, 0.5]);
        let r = sinkhorn(&k, &h, &h, 1e-12, 100).unwrap();
        assert!(max_abs_diff(&r.scaled, &Array2::from_elem((2, 2), 0.25)) < 1e-15);
    }

    #[test]
    fn sinkhorn_fixed_point_in_one_sweep() {
        let k = array![[0.1, 0.2], [0.3, 0.4]];
        let a = marg(&[0.3, 0.7]);
        let b = marg(&[0.4, 0.6]);
        let r = sinkhorn(&k, &a, &b, 1e-12, 100).unwrap();
        assert_eq!(r.iters, 1);
        assert!(max_abs_diff(&r.scaled, &k) < 1e-15);
    }

    #[test]
    fn sinkhorn_matches_long_run_fixed_point() {
        let k = random_kernel(1, 3, 3);
        let a = marg(&[0.2, 0.3, 0.5]);
        let b = marg(&[0.4, 0.4, 0.2]);
        let r = sinkhorn(&k, &a, &b, 1e-12, 10_000).unwrap();
        let mut p = k.clone();
        for _ in 0..100_000 {
            let rows = p.sum_axis(Axis(1));
            for ((i, _), x) in p.indexed_iter_mut() {
                *x *= a[i] / rows[i];
            }
            let cols = p.sum_axis(Axis(0));
            for ((_, j), x) in p.indexed_iter_mut() {
                *x *= b[j] / cols[j];
            }
        }
        assert!(max_abs_diff(&r.scaled, &p) < 1e-10);
        let rows = r.scaled.sum_axis(Axis(1));
        for i in 0..3 {
            assert!((rows[i] - a[i]).abs() < 1e-14);
        }
        let cols = r.scaled.sum_axis(Axis(0));
        assert!(cols.iter().zip(b.view()).map(|(c, b)| (c - b).abs()).sum::<f64>() <= 1e-12);
    }

    #[test]
    fn sinkhorn_is_scale_invariant() {
        let k = random_kernel(2, 4, 3);
        let a = marg(&[0.1, 0.2, 0.3, 0.4]);
        let b = marg(&[0.5, 0.25, 0.25]);
        let r1 = sinkhorn(&k, &a, &b, 1e-13, 1000).unwrap();
        let r2 = sinkhorn(&(&k * 37.5), &a, &b, 1e-13, 1000).unwrap();
        assert!(max_abs_diff(&r1.scaled, &r2.scaled) < 1e-12);
    }

    #[test]
    fn sinkhorn_rejects_bad_kernels() {
        let h = marg(&[0.5, 0.5]);
        let k = array![[1.0, -1.0], [1.0, 1.0]];
        assert!(matches!(sinkhorn(&k, &h, &h, 1e-9, 10), Err(OtError::NonPositiveKernel(_))));
        let k = array![[0.0, 0.0], [1.0, 1.0]];
        assert!(matches!(sinkhorn(&k, &h, &h, 1e-9, 10), Err(OtError::NonPositiveKernel(_))));
    }

    #[test]
    fn sinkhorn_reports_non_convergence_with_partial() {
        let k = random_kernel(3, 5, 5);
        let h = Marginal::uniform(5);
        match sinkhorn(&k, &h, &h, 1e-15, 2) {
            Err(OtError::NotConverged { iters, partial, .. }) => {
                assert_eq!(iters, 2);
                assert_eq!(partial.scaled.dim(), (5, 5));
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn log_domain_fallback_handles_extreme_kernels() {
        // A kernel scaled down to 1e-295 forces scalings past the plain-domain range;
        // by scale invariance the answer must match the unscaled kernel.
        let k = random_kernel(12, 3, 4);
        let a = marg(&[0.5, 0.3, 0.2]);
        let b = marg(&[0.1, 0.2, 0.3, 0.4]);
        let plain = sinkhorn(&k, &a, &b, 1e-13, 5000).unwrap();
        let tiny = sinkhorn(&(&k * 1e-295), &a, &b, 1e-13, 5000).unwrap();
        assert!(tiny.u.iter().any(|u| *u > SCALE_BOUND));
        assert!(max_abs_diff(&plain.scaled, &tiny.scaled) < 1e-12);
        // Log-domain sums lose a few digits to the ~680-sized exponents.
        let rows = tiny.scaled.sum_axis(Axis(1));
        for i in 0..3 {
            assert!((rows[i] - a[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn sr_right_tau_zero_is_row_normalization() {
        let k = random_kernel(4, 4, 2);
        let a = marg(&[0.1, 0.2, 0.3, 0.4]);
        let g = marg(&[0.5, 0.5]);
        let r = sr_right_projection(&k, 1.0, 0.0, &a, &g, 1e-12, 50).unwrap();
        let rows = k.sum_axis(Axis(1));
        let expected = Array2::from_shape_fn((4, 2), |(i, j)| a[i] / rows[i] * k[[i, j]]);
        assert!(max_abs_diff(&r.scaled, &expected) < 1e-16);
        assert!(r.v.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn sr_right_fixed_point() {
        let a = marg(&[0.25, 0.75]);
        let g = marg(&[0.5, 0.5]);
        let k = Array2::from_shape_fn((2, 2), |(i, j)| a[i] * g[j]);
        let r = sr_right_projection(&k, 1.0, 50.0, &a, &g, 1e-12, 50).unwrap();
        assert!(r.final_residual == 0.0);
        assert!(max_abs_diff(&r.scaled, &k) < 1e-16);
    }

    fn kl(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
        x.iter().zip(y).map(|(x, y)| x * (x / y).ln() - x + y).sum()
    }

    #[test]
    fn sr_right_interpolates_inner_marginal() {
        let k = random_kernel(5, 4, 2);
        let a = marg(&[0.1, 0.2, 0.3, 0.4]);
        let g = marg(&[0.8, 0.2]);
        let r = sr_right_projection(&k, 1.0, 50.0, &a, &g, 1e-12, 100_000).unwrap();
        let rows = r.scaled.sum_axis(Axis(1));
        for i in 0..4 {
            assert!((rows[i] - a[i]).abs() < 1e-14);
        }
        // Row-normalized kernel: the τ = 0 end of the interpolation.
        let raw = sr_right_projection(&k, 1.0, 0.0, &a, &g, 1e-12, 50).unwrap().scaled.sum_axis(Axis(0));
        let inner = r.scaled.sum_axis(Axis(0));
        assert!(kl(inner.view(), g.view()) < kl(raw.view(), g.view()));
        assert!(kl(inner.view(), raw.view()) > 0.0);
    }

    #[test]
    fn sr_left_is_transpose_dual() {
        let k = random_kernel(6, 5, 3);
        let a = marg(&[0.1, 0.2, 0.3, 0.2, 0.2]);
        let g = marg(&[0.3, 0.3, 0.4]);
        let right = sr_right_projection(&k, 2.0, 10.0, &a, &g, 1e-12, 500).unwrap();
        let left = sr_left_projection(&k.t().to_owned(), 2.0, 10.0, &g, &a, 1e-12, 500).unwrap();
        assert!(max_abs_diff(&left.scaled.t().to_owned(), &right.scaled) < 1e-13);
        let cols = left.scaled.sum_axis(Axis(0));
        for j in 0..5 {
            assert!((cols[j] - a[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn sr_left_tau_zero_is_column_normalization() {
        let k = random_kernel(7, 2, 3);
        let b = marg(&[0.2, 0.3, 0.5]);
        let g = marg(&[0.5, 0.5]);
        let r = sr_left_projection(&k, 1.0, 0.0, &g, &b, 1e-12, 50).unwrap();
        let cols = k.sum_axis(Axis(0));
        let expected = Array2::from_shape_fn((2, 3), |(i, j)| k[[i, j]] * b[j] / cols[j]);
        assert!(max_abs_diff(&r.scaled, &expected) < 1e-16);
    }

    #[test]
    fn unbalanced_tau_zero_returns_kernel() {
        let k = random_kernel(8, 3, 4);
        let a = Marginal::uniform(3);
        let b = Marginal::uniform(4);
        let r = unbalanced_projection(&k, 1.0, 0.0, &a, &b, 1e-12, 50).unwrap();
        assert_eq!(r.scaled, k);
    }

    #[test]
    fn unbalanced_large_tau_approaches_sinkhorn() {
        let k = random_kernel(9, 3, 3);
        let a = marg(&[0.2, 0.3, 0.5]);
        let b = marg(&[0.4, 0.4, 0.2]);
        // The relaxed mass drifts at rate 1e-9 per sweep, so the log-change rule never
        // fires; the iterate is nonetheless balanced to well within 1e-6.
        let (u, _) = accept_partial(unbalanced_projection(&k, 1.0, 1e9, &a, &b, 1e-13, 5000)).unwrap();
        let s = sinkhorn(&k, &a, &b, 1e-13, 10_000).unwrap();
        let rows = u.scaled.sum_axis(Axis(1));
        let cols = u.scaled.sum_axis(Axis(0));
        for i in 0..3 {
            assert!((rows[i] - a[i]).abs() < 1e-6);
            assert!((cols[i] - b[i]).abs() < 1e-6);
        }
        assert!(max_abs_diff(&u.scaled, &s.scaled) < 1e-6);
    }

    #[test]
    fn unbalanced_satisfies_prox_stationarity() {
        // P minimizes γ⁻¹ KL(P‖K) + τ KL(P1‖a) + τ KL(Pᵀ1‖b); check the gradient
        // γ⁻¹ log(P/K) + τ log(P1/a)_i + τ log(Pᵀ1/b)_j vanishes entrywise.
        let k = random_kernel(10, 3, 3);
        let a = marg(&[0.2, 0.3, 0.5]);
        let b = marg(&[0.4, 0.4, 0.2]);
        let (gamma, tau) = (1.0, 10.0);
        let r = unbalanced_projection(&k, gamma, tau, &a, &b, 1e-15, 100_000).unwrap();
        let p = &r.scaled;
        let rows = p.sum_axis(Axis(1));
        let cols = p.sum_axis(Axis(0));
        for ((i, j), x) in p.indexed_iter() {
            let g = (x / k[[i, j]]).ln() / gamma + tau * (rows[i] / a[i]).ln() + tau * (cols[j] / b[j]).ln();
            assert!(g.abs() < 1e-8, "stationarity residual {g} at ({i}, {j})");
        }
    }

    #[test]
    fn scaled_matches_diag_u_k_diag_v() {
        let k = random_kernel(11, 4, 3);
        let a = Marginal::uniform(4);
        let g = Marginal::uniform(3);
        for r in [
            sinkhorn(&k, &a, &g, 1e-12, 1000).unwrap(),
            sr_right_projection(&k, 5.0, 75.0, &a, &g, 1e-12, 100_000).unwrap(),
            unbalanced_projection(&k, 5.0, 75.0, &a, &g, 1e-12, 100_000).unwrap(),
        ] {
            for ((i, j), x) in r.scaled.indexed_iter() {
                let y = r.u[i] * k[[i, j]] * r.v[j];
                assert!((x - y).abs() <= 1e-12 * y.abs());
            }
        }
    }

    #[test]
    fn newton_matches_sinkhorn() {
        let k = random_kernel(11, 6, 4);
        let a = marg(&[0.1, 0.2, 0.15, 0.25, 0.2, 0.1]);
        let b = marg(&[0.4, 0.3, 0.2, 0.1]);
        let s = sinkhorn(&k, &a, &b, 1e-13, 100_000).unwrap();
        let nt = sinkhorn_newton(&k, &a, &b, None, 1e-13, 50).unwrap();
        assert!(max_abs_diff(&s.scaled, &nt.scaled) < 1e-12);
    }

    #[test]
    fn newton_solves_kernels_where_sinkhorn_stalls() {
        // Log10 entries of a latent kernel met after a few mirror steps: the dominant
        // near-permutation disagrees with the marginals by tens of orders of magnitude.
        let log10 = array![
            [-13.1, -178.1, -157.0, -230.4, -225.8],
            [-35.4, -17.2, -51.6, -98.7, -125.2],
            [-35.8, -93.0, -57.2, -86.4, -19.6],
            [-37.8, -101.4, -31.9, -21.6, -109.4],
            [-39.7, -113.1, -18.9, -133.1, -113.4]
        ];
        let k = log10.mapv(|x: f64| 10f64.powf(x));
        let a = marg(&[0.13333333, 0.19723267, 0.23104929, 0.23610046, 0.20228425]);
        let b = marg(&[0.24005237, 0.15994762, 0.20253636, 0.23746365, 0.16]);
        let b = Marginal::new(b.as_array() * (a.mass() / b.mass())).unwrap();
        assert!(matches!(sinkhorn(&k, &a, &b, 1e-9, 1000), Err(OtError::NotConverged { .. })));
        let r = sinkhorn_newton(&k, &a, &b, None, 1e-9, 100).unwrap();
        let rows = r.scaled.sum_axis(Axis(1));
        let cols = r.scaled.sum_axis(Axis(0));
        let row_gap = rows.iter().zip(a.view()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(row_gap < 1e-14, "row gap {row_gap}");
        assert!(cols.iter().zip(b.view()).map(|(x, y)| (x - y).abs()).sum::<f64>() <= 1e-9);
        assert!(r.iters < 50);
    }

    #[test]
    fn newton_rejects_zero_targets() {
        let k = random_kernel(1, 3, 3);
        let a = marg(&[0.5, 0.5, 0.0]);
        let b = Marginal::uniform(3);
        assert!(matches!(sinkhorn_newton(&k, &a, &b, None, 1e-9, 10), Err(OtError::DegenerateMarginal { index: 2, .. })));
    }

    #[test]
    fn relaxed_newton_matches_semi_relaxed_sweeps() {
        let k = random_kernel(21, 7, 3);
        let a = marg(&[0.1, 0.2, 0.1, 0.15, 0.15, 0.2, 0.1]);
        let g = marg(&[0.5, 0.3, 0.2]);
        let s = sr_right_projection(&k, 2.0, 5.0, &a, &g, 1e-15, 100_000).unwrap();
        let nt = relaxed_newton(&k, 2.0, (f64::INFINITY, 5.0), &a, &g, None, 1e-13, 50).unwrap();
        assert!(max_abs_diff(&s.scaled, &nt.scaled) < 1e-11);
        let rows = nt.scaled.sum_axis(Axis(1));
        for (x, y) in rows.iter().zip(a.view()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn relaxed_newton_matches_unbalanced_sweeps() {
        let k = random_kernel(22, 5, 4);
        let a = marg(&[0.3, 0.2, 0.1, 0.25, 0.15]);
        let b = marg(&[0.1, 0.4, 0.3, 0.2]);
        let s = unbalanced_projection_split(&k, 1.5, (3.0, 8.0), &a, &b, 1e-15, 100_000).unwrap();
        let nt = relaxed_newton(&k, 1.5, (3.0, 8.0), &a, &b, None, 1e-13, 50).unwrap();
        assert!(max_abs_diff(&s.scaled, &nt.scaled) < 1e-11);
    }

    #[test]
    fn relaxed_newton_warm_start_from_partial_sweeps() {
        let k = random_kernel(23, 6, 3);
        let a = Marginal::uniform(6);
        let g = marg(&[0.6, 0.3, 0.1]);
        let partial = match sr_right_projection(&k, 3.0, 20.0, &a, &g, 1e-15, 2) {
            Err(OtError::NotConverged { partial, .. }) => *partial,
            other => panic!("expected a partial result, got {other:?}"),
        };
        let (lu, lv) = (partial.u.mapv(f64::ln), partial.v.mapv(f64::ln));
        let warm = relaxed_newton(&k, 3.0, (f64::INFINITY, 20.0), &a, &g, Some((&lu, &lv)), 1e-13, 50).unwrap();
        let cold = relaxed_newton(&k, 3.0, (f64::INFINITY, 20.0), &a, &g, None, 1e-13, 50).unwrap();
        assert!(max_abs_diff(&warm.scaled, &cold.scaled) < 1e-12);
    }

    #[test]
    fn relaxed_newton_rejects_zero_weight() {
        let k = random_kernel(24, 3, 2);
        let a = Marginal::uniform(3);
        let b = Marginal::uniform(2);
        assert!(relaxed_newton(&k, 1.0, (0.0, 1.0), &a, &b, None, 1e-9, 10).is_err());
    }

    #[test]
    fn log_newton_handles_kernels_below_f64_range() {
        // Off-diagonal log entries underflow to zero once exponentiated.
        let lk = Array2::from_shape_fn((3, 3), |(i, j)| if i == j { 0.0 } else { -900.0 - (i + 2 * j) as f64 });
        assert!(lk.mapv(f64::exp).iter().filter(|x| **x == 0.0).count() == 6);
        let a = marg(&[0.5, 0.3, 0.2]);
        let b = marg(&[0.2, 0.3, 0.5]);
        let r = sinkhorn_newton_log(&lk, &a, &b, None, 1e-12, 200).unwrap();
        let rows = r.scaled.sum_axis(Axis(1));
        let cols = r.scaled.sum_axis(Axis(0));
        let gap: f64 = rows.iter().zip(a.view()).chain(cols.iter().zip(b.view())).map(|(x, y)| (x - y).abs()).sum();
        assert!(gap <= 1e-10, "gap {gap}");
    }
}
