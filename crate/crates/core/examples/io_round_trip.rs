//! Solve, write the factors in both matrix formats, read them back and check the plan
//! is unchanged.
//!
//! Run with `cargo run --release --example io_round_trip -- [dir]`.

use std::path::PathBuf;

use frlc::datasets::{build_preset, Preset};
use frlc::io::{read_matrix, write_matrix};
use frlc::lc::{reconstruct_plan, LcFactors};
use frlc::problem::ProblemSpec;
use frlc::solver::frlc_solve;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir).join("frlc-io-example");
    std::fs::create_dir_all(&dir)?;
    let inst = build_preset(Preset::Random2d, 50, 40, 0)?;
    let report = frlc_solve(&ProblemSpec::uniform(50, 40, 5), &inst.cost, None)?;
    let plan = reconstruct_plan(&report.factors)?;

    for ext in ["csv", "mat"] {
        let path = |name: &str| dir.join(format!("{name}.{ext}"));
        let f = &report.factors;
        write_matrix(path("Q"), f.q().view())?;
        write_matrix(path("R"), f.r().view())?;
        write_matrix(path("T"), f.t().view())?;
        let back = LcFactors::new(read_matrix(path("Q"))?, read_matrix(path("R"))?, read_matrix(path("T"))?)?;
        let diff = (&reconstruct_plan(&back)? - &plan).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        println!("{ext}: max plan difference after round trip {diff:.1e}");
    }
    println!("files in {}", dir.display());
    Ok(())
}
