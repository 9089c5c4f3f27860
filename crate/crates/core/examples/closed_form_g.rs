//! Closed-form inner marginal of a factored coupling: for fixed `Q` and `R` the cost
//! `Σ ω_k / g_k` is minimized at `g ∝ √ω`. Compares it with random simplex points.
//!
//! Run with `cargo run --release --example closed_form_g`.

use frlc::analysis::{factored_cost, omega, optimal_g};
use frlc::datasets::{build_preset, Preset};
use frlc::problem::ProblemSpec;
use frlc::solver::frlc_solve;
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inst = build_preset(Preset::Random2d, 80, 80, 2)?;
    let report = frlc_solve(&ProblemSpec::uniform(80, 80, 4), &inst.cost, None)?;
    let (q, r) = (report.factors.q(), report.factors.r());
    let w = omega(q, r, &inst.cost)?;
    let best = optimal_g(q, r, &inst.cost)?;
    let best_cost = factored_cost(&w, best.g.as_array());
    println!("omega      {w:.5}");
    println!("optimal g  {:.5}  cost {best_cost:.6}", best.g.as_array());

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst_gap = f64::INFINITY;
    for _ in 0..10_000 {
        let g = Array1::from_shape_fn(w.len(), |_| -rng.random::<f64>().ln());
        let g = &g / g.sum();
        worst_gap = worst_gap.min(factored_cost(&w, &g) - best_cost);
    }
    println!("smallest excess over 10000 random g: {worst_gap:.3e}");
    Ok(())
}
