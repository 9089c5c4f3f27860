//! Fused Gromov-Wasserstein: a linear feature cost blended with intra-domain structure.
//! Sweeps the blend weight and reports both parts of the objective.
//!
//! Run with `cargo run --release --example fused_gw`.

use frlc::cost::{CostMatrix, CostSpec};
use frlc::datasets::{euclidean_matrix, gen_moons_gaussians, normalize_by_max};
use frlc::lc::primal_cost;
use frlc::objectives::gw_cost;
use frlc::problem::{Objective, ProblemSpec};
use frlc::solver::frlc_solve;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 200;
    let (src, tgt) = gen_moons_gaussians(n, n, 0)?;
    let da = normalize_by_max(euclidean_matrix(&src.points, &src.points, false)?);
    let db = normalize_by_max(euclidean_matrix(&tgt.points, &tgt.points, false)?);
    let c = normalize_by_max(euclidean_matrix(&src.points, &tgt.points, false)?);
    let cost = CostSpec::gw(da, db)?.with_linear(CostMatrix::Dense(c));

    println!("alpha   W part   GW part");
    for alpha in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let p = ProblemSpec::uniform(n, n, 10).with_objective(Objective::Fused { alpha });
        let report = frlc_solve(&p, &cost, None)?;
        let f = &report.factors;
        println!("{alpha:5.2}  {:.5}  {:.5}", primal_cost(f, &cost)?, gw_cost(f, &cost)?);
    }
    Ok(())
}
