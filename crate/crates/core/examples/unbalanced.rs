//! Unbalanced transport between measures of different mass. Both marginals are
//! penalized; the plan mass settles between the two.
//!
//! Run with `cargo run --release --example unbalanced -- [tau]`.

use frlc::datasets::{build_preset, Preset};
use frlc::lc::reconstruct_plan;
use frlc::problem::{Mode, ProblemSpec};
use frlc::solver::frlc_solve;
use frlc::Marginal;
use ndarray::Array1;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tau: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5.0);
    let (n, m) = (150, 100);
    let inst = build_preset(Preset::Random2d, n, m, 1)?;
    let a = Marginal::new(Array1::from_elem(n, 1.0 / n as f64))?;
    let b = Marginal::new(Array1::from_elem(m, 0.6 / m as f64))?;

    let mut p = ProblemSpec::new(a, b, 8).with_mode(Mode::Unbalanced);
    p.tau2 = tau;
    let report = frlc_solve(&p, &inst.cost, None)?;
    let plan = reconstruct_plan(&report.factors)?;
    println!("masses: a 1.0, b 0.6, plan {:.4}", plan.sum());
    println!("cost {:.5}  residuals {:.3e} / {:.3e}", report.final_cost(), report.left_residual, report.right_residual);
    println!("iterations {} (converged: {})", report.iters, report.converged);
    Ok(())
}
