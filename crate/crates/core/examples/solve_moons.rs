//! Rank-constrained transport between eight Gaussians and two moons.
//!
//! Run with `cargo run --release --example solve_moons -- [rank] [seed] [data-seed]`.

use frlc::cost::CostSpec;
use frlc::datasets::{euclidean_matrix, gen_moons_gaussians, normalize_by_max};
use frlc::problem::ProblemSpec;
use frlc::solver::frlc_solve;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let rank: usize = args.first().map(|s| s.parse()).transpose()?.unwrap_or(100);
    let seed: u64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let data_seed: u64 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(seed);

    let (gaussians, moons) = gen_moons_gaussians(1000, 1000, data_seed)?;
    let c = normalize_by_max(euclidean_matrix(&gaussians.points, &moons.points, false)?);
    let p = ProblemSpec::uniform(1000, 1000, rank).with_seed(seed);
    let report = frlc_solve(&p, &CostSpec::dense(c), None)?;

    println!("rank {rank}, seed {seed}, data seed {data_seed}");
    println!("cost       {:.5}", report.final_cost());
    println!("iterations {} (converged: {})", report.iters, report.converged);
    println!("residuals  {:.2e} / {:.2e}", report.left_residual, report.right_residual);
    println!("time       {:.2} s", report.wall_time);
    Ok(())
}
