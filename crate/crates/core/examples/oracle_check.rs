//! Low-rank costs on tiny problems against the exact optimum from an assignment
//! solver. Full rank closes the gap; the rank bound caps it below full rank.
//!
//! Run with `cargo run --release --example oracle_check -- [instances]`.

use frlc::analysis::rank_bound;
use frlc::cost::CostSpec;
use frlc::oracle::exact_ot_uniform;
use frlc::problem::ProblemSpec;
use frlc::solver::frlc_solve;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let instances: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let n = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    println!("rank  mean gap   max gap    bound (mean)");
    let costs: Vec<Array2<f64>> = (0..instances).map(|_| Array2::from_shape_fn((n, n), |_| rng.random::<f64>())).collect();
    for rank in 2..=n {
        let (mut sum, mut max, mut bound) = (0.0, 0.0f64, 0.0);
        for c in &costs {
            let exact = exact_ot_uniform(c)?.cost;
            let spec = CostSpec::dense(c.clone());
            let lr = frlc_solve(&ProblemSpec::uniform(n, n, rank), &spec, None)?.final_cost();
            let gap = lr - exact;
            sum += gap;
            max = max.max(gap);
            bound += rank_bound(&spec, n, n, rank, 1.0)?;
        }
        let k = costs.len() as f64;
        println!("{rank:4}  {:.5}    {max:.5}    {:.4}", sum / k, bound / k);
    }
    Ok(())
}
