//! Barycentric projection through an LC factorization with unequal ranks: ten clusters
//! on a large circle against five on a small one. `T` shows how source anchors are
//! routed to target anchors.
//!
//! Run with `cargo run --release --example lc_projection_roots -- [seed]`.

use frlc::analysis::lc_project;
use frlc::datasets::{build_preset, Preset};
use frlc::problem::ProblemSpec;
use frlc::solver::frlc_solve;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let (n, m) = (500, 500);
    let inst = build_preset(Preset::Roots, n, m, seed)?;
    let p = ProblemSpec::uniform(n, m, 10).with_ranks(10, 5).with_seed(seed);
    let report = frlc_solve(&p, &inst.cost, None)?;
    let f = &report.factors;
    let bary = lc_project(f, &inst.source.points, &inst.target.points)?;

    println!("cost {:.5}", report.final_cost());
    println!("source anchors (Y1)          target anchors (Y2)");
    for i in 0..bary.y1.nrows() {
        let left = format!("({:6.3}, {:6.3})", bary.y1[[i, 0]], bary.y1[[i, 1]]);
        let right = bary.y2.get((i, 0)).map(|x| format!("({x:6.3}, {:6.3})", bary.y2[[i, 1]])).unwrap_or_default();
        println!("{left:28} {right}");
    }
    println!("row-normalized T:");
    for row in f.t().rows() {
        let s = row.sum();
        println!("  {}", row.iter().map(|x| format!("{:.2}", x / s)).collect::<Vec<_>>().join(" "));
    }
    Ok(())
}
