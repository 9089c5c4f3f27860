//! Gradients, step sizes and Gibbs kernels for the W, GW and FGW objectives in
//! factored form.
//!
//! Every objective is a function `L(Q, R, X)` of the sub-couplings and the inner matrix
//! `X = diag(1/g_Q)·T·diag(1/g_R)`. Given the partials of `L` at fixed `X` and the
//! `X`-gradient `M_X`, the total gradients (with `g_Q = Qᵀ1`, `g_R = Rᵀ1` treated as
//! functions of `Q` and `R`) are
//!
//! ```text
//! ∇_Q = ∂_Q L − 1_n · (diag(M_X Xᵀ) / g_Q)ᵀ
//! ∇_R = ∂_R L − 1_m · (diag(Xᵀ M_X) / g_R)ᵀ
//! ∇_T = diag(1/g_Q) · M_X · diag(1/g_R)
//! ```
//!
//! The rank-one terms are what the plain "kernel" formulas omit.

use ndarray::{Array1, Array2, Axis, Zip};

use crate::cost::{CostMatrix, CostSpec, IntraCost};
use crate::error::{OtError, Result};
use crate::lc::LcFactors;
use crate::problem::{Mode, Objective};

/// Step denominators never drop below this.
pub const STEP_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientTriple {
    pub dq: Array2<f64>,
    pub dr: Array2<f64>,
    pub dt: Array2<f64>,
}

impl GradientTriple {
    /// `wa·self + wb·other`, block by block.
    pub fn combine(&self, wa: f64, other: &GradientTriple, wb: f64) -> GradientTriple {
        GradientTriple {
            dq: &self.dq * wa + &other.dq * wb,
            dr: &self.dr * wa + &other.dr * wb,
            dt: &self.dt * wa + &other.dt * wb,
        }
    }
}

struct LinearParts {
    /// `C·R`, n×r₂.
    cr: Array2<f64>,
    /// `Qᵀ·C·R`, r₁×r₂.
    qtcr: Array2<f64>,
    /// `Cᵀ·Q`, m×r₁. Only needed for the R-gradient.
    ctq: Option<Array2<f64>>,
}

struct GwParts {
    aq: Array2<f64>,
    br: Array2<f64>,
    /// `Aᵀ·Q` and `Bᵀ·R` when the intra costs are not symmetric.
    atq: Option<Array2<f64>>,
    btr: Option<Array2<f64>>,
    /// `S_A = QᵀAQ`, `S_B = RᵀBR`.
    s_a: Array2<f64>,
    s_b: Array2<f64>,
    /// `(A² + A²ᵀ)·Q1` and `(B² + B²ᵀ)·R1`.
    a2q1: Array1<f64>,
    b2r1: Array1<f64>,
    /// `(Q1)ᵀA²(Q1) + (R1)ᵀB²(R1)`.
    constant: f64,
}

/// Contractions of the cost with a fixed pair `(Q, R)`. Everything the solver needs for
/// the Q/R gradients, the T gradient and the objective value at any `X` is derived
/// from these `r`-sized pieces.
pub(crate) struct Contractions {
    w_weight: f64,
    gw_weight: f64,
    linear: Option<LinearParts>,
    gw: Option<GwParts>,
}

fn linear_parts(c: &CostMatrix, q: &Array2<f64>, r: &Array2<f64>, with_ctq: bool) -> LinearParts {
    let cr = c.right_mul(r);
    let qtcr = q.t().dot(&cr);
    let ctq = with_ctq.then(|| c.left_mul_t(q));
    LinearParts { cr, qtcr, ctq }
}

fn gw_parts(intra: &IntraCost, q: &Array2<f64>, r: &Array2<f64>) -> GwParts {
    let aq = intra.a.dot(q);
    let br = intra.b.dot(r);
    let (atq, btr) = if intra.is_symmetric() {
        (None, None)
    } else {
        (Some(intra.a.t().dot(q)), Some(intra.b.t().dot(r)))
    };
    let s_a = q.t().dot(&aq);
    let s_b = r.t().dot(&br);
    let q1 = q.sum_axis(Axis(1));
    let r1 = r.sum_axis(Axis(1));
    let a2 = intra.a_sq.dot(&q1);
    let b2 = intra.b_sq.dot(&r1);
    let constant = q1.dot(&a2) + r1.dot(&b2);
    let (a2q1, b2r1) = if intra.is_symmetric() {
        (a2 * 2.0, b2 * 2.0)
    } else {
        (a2 + intra.a_sq.t().dot(&q1), b2 + intra.b_sq.t().dot(&r1))
    };
    GwParts { aq, br, atq, btr, s_a, s_b, a2q1, b2r1, constant }
}

fn weights(objective: Objective) -> (f64, f64) {
    match objective {
        Objective::Wasserstein => (1.0, 0.0),
        Objective::GromovWasserstein => (0.0, 1.0),
        Objective::Fused { alpha } => (alpha, 1.0 - alpha),
    }
}

impl Contractions {
    /// `with_qr_grads` also prepares the pieces needed for the Q/R gradients.
    pub(crate) fn new(
        q: &Array2<f64>,
        r: &Array2<f64>,
        c: &CostSpec,
        objective: Objective,
        with_qr_grads: bool,
    ) -> Result<Self> {
        let (w_weight, gw_weight) = weights(objective);
        let linear = if objective.needs_linear() {
            Some(linear_parts(c.linear().ok_or(OtError::MissingLinearCost)?, q, r, with_qr_grads))
        } else {
            None
        };
        let gw = if objective.needs_intra() {
            Some(gw_parts(c.intra().ok_or(OtError::MissingIntraCost)?, q, r))
        } else {
            None
        };
        Ok(Contractions { w_weight, gw_weight, linear, gw })
    }

    /// Gradient of the objective with respect to `X`.
    pub(crate) fn grad_x(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut m = Array2::zeros(x.dim());
        if let Some(l) = &self.linear {
            m.scaled_add(self.w_weight, &l.qtcr);
        }
        if let Some(g) = &self.gw {
            let mut t = g.s_a.dot(x).dot(&g.s_b);
            if g.atq.is_some() {
                t += &g.s_a.t().dot(x).dot(&g.s_b.t());
            } else {
                t *= 2.0;
            }
            m.scaled_add(-2.0 * self.gw_weight, &t);
        }
        m
    }

    /// Objective value in reduced form (exact when `T ∈ Π(g_Q, g_R)`).
    pub(crate) fn value(&self, x: &Array2<f64>) -> f64 {
        let mut v = 0.0;
        if let Some(l) = &self.linear {
            v += self.w_weight * (&l.qtcr * x).sum();
        }
        if let Some(g) = &self.gw {
            v += self.gw_weight * gw_reduced(g, x);
        }
        v
    }

    /// Partials of the objective in `Q` and `R` with `X` held fixed.
    fn partials(&self, q: &Array2<f64>, r: &Array2<f64>, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut pq = Array2::zeros(q.dim());
        let mut pr = Array2::zeros(r.dim());
        if let Some(l) = &self.linear {
            let ctq = l.ctq.as_ref().expect("contractions were prepared without Q/R gradient support");
            pq.scaled_add(self.w_weight, &l.cr.dot(&x.t()));
            pr.scaled_add(self.w_weight, &ctq.dot(x));
        }
        if let Some(g) = &self.gw {
            let w = self.gw_weight;
            // −2 ∂_Q tr(Xᵀ S_A X S_B) = −2 (A Q X S_B Xᵀ + Aᵀ Q X S_Bᵀ Xᵀ)
            let xsbxt = x.dot(&g.s_b).dot(&x.t());
            let xtsax = x.t().dot(&g.s_a).dot(x);
            let (tq, tr) = match (&g.atq, &g.btr) {
                (Some(atq), Some(btr)) => (
                    g.aq.dot(&xsbxt) + atq.dot(&xsbxt.t()),
                    g.br.dot(&xtsax) + btr.dot(&xtsax.t()),
                ),
                _ => (g.aq.dot(&xsbxt) * 2.0, g.br.dot(&xtsax) * 2.0),
            };
            pq.scaled_add(-2.0 * w, &tq);
            pr.scaled_add(-2.0 * w, &tr);
            add_to_columns(&mut pq, &g.a2q1, w);
            add_to_columns(&mut pr, &g.b2r1, w);
        }
        (pq, pr)
    }

    /// Total gradients in `Q` and `R` (through the inner marginals).
    pub(crate) fn grad_qr(&self, f: &LcFactors, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let (mut dq, mut dr) = self.partials(f.q(), f.r(), x);
        let mx = self.grad_x(x);
        let prod = &mx * x;
        let row_q = Zip::from(&prod.sum_axis(Axis(1))).and(f.g_q().as_array()).map_collect(|s, g| s / g);
        let row_r = Zip::from(&prod.sum_axis(Axis(0))).and(f.g_r().as_array()).map_collect(|s, g| s / g);
        add_to_rows(&mut dq, &row_q, -1.0);
        add_to_rows(&mut dr, &row_r, -1.0);
        (dq, dr)
    }

    /// `∇_T = diag(1/g_Q) · M_X · diag(1/g_R)`.
    pub(crate) fn grad_t(&self, f: &LcFactors, x: &Array2<f64>) -> Array2<f64> {
        crate::lc::scale_rows_cols(&self.grad_x(x), &f.inv_g_q(), &f.inv_g_r())
    }
}

fn gw_reduced(g: &GwParts, x: &Array2<f64>) -> f64 {
    g.constant - 2.0 * (&g.s_a.dot(x).dot(&g.s_b) * x).sum()
}

/// `M[i, k] += w·col[i]` for every `k`.
fn add_to_columns(m: &mut Array2<f64>, col: &Array1<f64>, w: f64) {
    Zip::from(m.rows_mut()).and(col).for_each(|mut row, &c| row += w * c);
}

/// `M[i, k] += w·row[k]` for every `i`.
fn add_to_rows(m: &mut Array2<f64>, row: &Array1<f64>, w: f64) {
    for mut r in m.rows_mut() {
        r.scaled_add(w, row);
    }
}

fn full_gradient(f: &LcFactors, c: &CostSpec, objective: Objective) -> Result<GradientTriple> {
    let x = f.inner_matrix()?;
    let k = Contractions::new(f.q(), f.r(), c, objective, true)?;
    let (dq, dr) = k.grad_qr(f, &x);
    let dt = k.grad_t(f, &x);
    Ok(GradientTriple { dq, dr, dt })
}

/// Gradients of `⟨C, P⟩`.
pub fn grad_w(f: &LcFactors, c: &CostSpec) -> Result<GradientTriple> {
    full_gradient(f, c, Objective::Wasserstein)
}

/// Gradients of the reduced GW objective.
pub fn grad_gw(f: &LcFactors, c: &CostSpec) -> Result<GradientTriple> {
    full_gradient(f, c, Objective::GromovWasserstein)
}

/// `alpha·grad_w + (1 − alpha)·grad_gw`.
pub fn grad_fgw(f: &LcFactors, c: &CostSpec, alpha: f64) -> Result<GradientTriple> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(OtError::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    full_gradient(f, c, Objective::Fused { alpha })
}

/// Gradient triple for any objective.
pub fn gradient(f: &LcFactors, c: &CostSpec, objective: Objective) -> Result<GradientTriple> {
    full_gradient(f, c, objective)
}

/// Reduced GW cost `1ᵀQᵀA²Q1 + 1ᵀRᵀB²R1 − 2⟨QXRᵀ, AQXRᵀB⟩`.
///
/// Equals the quadruple-sum definition whenever `T ∈ Π(g_Q, g_R)`, since then
/// `P1 = Q1` and `Pᵀ1 = R1`.
pub fn gw_cost(f: &LcFactors, c: &CostSpec) -> Result<f64> {
    let intra = c.intra().ok_or(OtError::MissingIntraCost)?;
    let (n, m) = f.plan_shape();
    c.check_shape(n, m)?;
    let x = f.inner_matrix()?;
    Ok(gw_reduced(&gw_parts(intra, f.q(), f.r()), &x))
}

/// General GW cost `1ᵀPᵀA²P1 + 1ᵀPB²Pᵀ1 − 2⟨APB, P⟩`, valid without any marginal
/// assumption. Uses only factored contractions.
pub fn gw_cost_general(f: &LcFactors, c: &CostSpec) -> Result<f64> {
    let intra = c.intra().ok_or(OtError::MissingIntraCost)?;
    let (n, m) = f.plan_shape();
    c.check_shape(n, m)?;
    let x = f.inner_matrix()?;
    let p_row = f.q().dot(&x.dot(f.g_r().as_array()));
    let p_col = f.r().dot(&x.t().dot(f.g_q().as_array()));
    let s_a = f.q().t().dot(&intra.a.dot(f.q()));
    let s_b = f.r().t().dot(&intra.b.dot(f.r()));
    let cross = (&s_a.dot(&x).dot(&s_b) * &x).sum();
    Ok(p_row.dot(&intra.a_sq.dot(&p_row)) + p_col.dot(&intra.b_sq.dot(&p_col)) - 2.0 * cross)
}

/// Transport cost of the objective. Balanced mode uses the reduced GW form; relaxed
/// modes use the general form.
pub fn objective_value(f: &LcFactors, c: &CostSpec, objective: Objective, mode: Mode) -> Result<f64> {
    let (w, g) = weights(objective);
    let mut v = 0.0;
    if w > 0.0 {
        v += w * crate::lc::primal_cost(f, c)?;
    }
    if objective.needs_intra() {
        let gw = if mode == Mode::Balanced { gw_cost(f, c)? } else { gw_cost_general(f, c)? };
        v += g * gw;
    }
    Ok(v)
}

fn max_abs(m: &Array2<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// ℓ∞-normalized steps `(γ / max(‖∇_Q‖∞, ‖∇_R‖∞), γ / ‖∇_T‖∞)`, denominators floored.
pub fn step_size(g: &GradientTriple, gamma: f64) -> (f64, f64) {
    (qr_step(&g.dq, &g.dr, gamma), t_step(&g.dt, gamma))
}

pub(crate) fn qr_step(dq: &Array2<f64>, dr: &Array2<f64>, gamma: f64) -> f64 {
    gamma / max_abs(dq).max(max_abs(dr)).max(STEP_FLOOR)
}

pub(crate) fn t_step(dt: &Array2<f64>, gamma: f64) -> f64 {
    gamma / max_abs(dt).max(STEP_FLOOR)
}

/// `prev ⊙ exp(−step·grad)`.
pub fn gibbs_kernel(prev: &Array2<f64>, grad: &Array2<f64>, step: f64) -> Array2<f64> {
    Zip::from(prev).and(grad).map_collect(|p, d| p * (-step * d).exp())
}

/// Mirror-descent kernels `(K_Q, K_R, K_T)`.
pub fn assemble_kernels(
    f: &LcFactors,
    g: &GradientTriple,
    gamma_qr: f64,
    gamma_t: f64,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    (
        gibbs_kernel(f.q(), &g.dq, gamma_qr),
        gibbs_kernel(f.r(), &g.dr, gamma_qr),
        gibbs_kernel(f.t(), &g.dt, gamma_t),
    )
}
