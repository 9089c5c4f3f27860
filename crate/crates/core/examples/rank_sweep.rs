//! Transport cost as a function of the latent rank, against an entropic full-rank
//! reference and the worst-case rank bound.
//!
//! Run with `cargo run --release --example rank_sweep -- [n]`.

use frlc::analysis::rank_bound;
use frlc::datasets::{build_preset, Preset};
use frlc::oracle::entropic_reference;
use frlc::problem::ProblemSpec;
use frlc::solver::frlc_solve;
use frlc::Marginal;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(200);
    let inst = build_preset(Preset::MoonsGaussians, n, n, 0)?;
    let dense = inst.cost.linear().expect("preset has a linear cost").to_dense();
    let reference = entropic_reference(&dense, &Marginal::uniform(n), &Marginal::uniform(n), 1e-3)?.cost;
    println!("entropic reference (eps 1e-3): {reference:.5}");
    println!("rank   cost     gap      bound");
    for rank in [2, 5, 10, 20, 50, 100] {
        let report = frlc_solve(&ProblemSpec::uniform(n, n, rank), &inst.cost, None)?;
        let cost = report.final_cost();
        let bound = rank_bound(&inst.cost, n, n, rank, 1.0)?;
        println!("{rank:4}  {cost:.5}  {:.5}  {bound:.4}", cost - reference);
    }
    Ok(())
}
