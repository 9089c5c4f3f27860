//! Semi-relaxed transport: one marginal is enforced, the other is pulled toward its
//! target by a KL penalty. The relaxed side drifts away from a mismatched target.
//!
//! Run with `cargo run --release --example semi_relaxed -- [tau]`.

use frlc::datasets::{build_preset, Preset};
use frlc::lc::{apply_plan, apply_plan_transpose};
use frlc::problem::{Mode, ProblemSpec};
use frlc::solver::frlc_solve;
use frlc::Marginal;
use ndarray::Array1;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tau: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1.0);
    let (n, m) = (200, 200);
    let inst = build_preset(Preset::Mixture2d, n, m, 0)?;
    // Ask for a target that overweights the first half of the points.
    let b = Marginal::normalized(Array1::from_shape_fn(m, |j| if j < m / 2 { 3.0 } else { 1.0 }))?;

    for mode in [Mode::SemiRelaxedRight, Mode::SemiRelaxedLeft] {
        let mut p = ProblemSpec::new(Marginal::uniform(n), b.clone(), 10).with_mode(mode);
        p.tau2 = tau;
        let report = frlc_solve(&p, &inst.cost, None)?;
        let f = &report.factors;
        let rows = apply_plan(f, Array1::ones(m).view())?;
        let cols = apply_plan_transpose(f, Array1::ones(n).view())?;
        let heavy: f64 = cols.iter().take(m / 2).sum();
        println!("{mode:>8}: cost {:.5}  residuals {:.2e} / {:.2e}", report.final_cost(), report.left_residual, report.right_residual);
        println!("          row mass {:.4}, first-half column mass {heavy:.4} (target 0.75)", rows.sum());
    }
    Ok(())
}
