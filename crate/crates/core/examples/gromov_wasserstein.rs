//! Gromov-Wasserstein alignment of a point cloud with a rotated, shuffled copy of
//! itself. Only intra-domain distances are used.
//!
//! Run with `cargo run --release --example gromov_wasserstein -- [seed]`.

use frlc::cost::CostSpec;
use frlc::datasets::{euclidean_matrix, gen_gaussian_mixture, MixtureSide};
use frlc::lc::reconstruct_plan;
use frlc::partition::argmax_rows;
use frlc::problem::{Objective, ProblemSpec};
use frlc::solver::frlc_solve;
use ndarray::{Array2, Axis};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let n = 60;
    let x = gen_gaussian_mixture(2, n, MixtureSide::First, 5)?.points;
    let (c, s) = (0.6f64.cos(), 0.6f64.sin());
    let rot = ndarray::array![[c, -s], [s, c]];
    let perm: Vec<usize> = (0..n).map(|i| (7 * i + 3) % n).collect();
    let y = x.dot(&rot).select(Axis(0), &perm);

    let (da, db) = (euclidean_matrix(&x, &x, false)?, euclidean_matrix(&y, &y, false)?);
    let scale = da.iter().cloned().fold(0.0, f64::max);
    let cost = CostSpec::gw(da / scale, db / scale)?;
    let p = ProblemSpec::uniform(n, n, 10).with_objective(Objective::GromovWasserstein).with_seed(seed);
    let report = frlc_solve(&p, &cost, None)?;

    let plan: Array2<f64> = reconstruct_plan(&report.factors)?;
    let matched = argmax_rows(&plan);
    // Point i of x is point j of y when perm[j] = i.
    let inverse: Vec<usize> = (0..n).map(|i| perm.iter().position(|&p| p == i).unwrap()).collect();
    let err = (0..n)
        .map(|i| (&y.row(matched[i]) - &y.row(inverse[i])).mapv(|d| d * d).sum().sqrt())
        .sum::<f64>()
        / n as f64;
    println!("GW cost {:.5e} after {} iterations", report.final_cost(), report.iters);
    println!("mean distance between matched point and true twin {err:.4}");
    Ok(())
}
