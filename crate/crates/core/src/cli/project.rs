//! `frlc project`.

use std::path::PathBuf;

use clap::Args;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::resolve;
use super::{ensure_dir, write_report, CliError, CliResult, Outcome, REPORT_SCHEMA};
use crate::analysis::lc_project;
use crate::io::{read_matrix, read_points, write_matrix};
use crate::lc::LcFactors;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ProjectArgs {
    /// JSON file whose keys are flag names; flags given on the command line win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Directory holding Q.csv, R.csv and T.csv (as written by `solve --out`).
    #[arg(long)]
    pub factors: Option<PathBuf>,
    #[arg(long)]
    pub q: Option<PathBuf>,
    #[arg(long)]
    pub r: Option<PathBuf>,
    #[arg(long)]
    pub t: Option<PathBuf>,
    /// Points of the left dataset, one per row.
    #[arg(long)]
    pub points1: Option<PathBuf>,
    /// Points of the right dataset, one per row.
    #[arg(long)]
    pub points2: Option<PathBuf>,
    /// Output directory for Y1.csv, Y2.csv, T_normalized.csv and report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `T` with each row divided by its sum (zero rows stay zero).
pub fn row_stochastic(t: &Array2<f64>) -> Array2<f64> {
    let mut out = t.clone();
    for mut row in out.rows_mut() {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        }
    }
    out
}

pub(crate) fn run(flags: ProjectArgs) -> CliResult<Outcome> {
    let (args, echo) = resolve(&flags, flags.config.as_deref())?;
    let factor = |explicit: &Option<PathBuf>, file: &str, flag: &str| -> CliResult<PathBuf> {
        explicit
            .clone()
            .or_else(|| args.factors.as_ref().map(|d| d.join(file)))
            .ok_or_else(|| CliError::Usage(format!("missing --{flag} (or --factors)")))
    };
    let (q, r, t) = (factor(&args.q, "Q.csv", "q")?, factor(&args.r, "R.csv", "r")?, factor(&args.t, "T.csv", "t")?);
    let p1 = args.points1.as_ref().ok_or_else(|| CliError::Usage("missing --points1".into()))?;
    let p2 = args.points2.as_ref().ok_or_else(|| CliError::Usage("missing --points2".into()))?;
    let out = args.out.as_ref().ok_or_else(|| CliError::Usage("missing --out".into()))?;

    let f = LcFactors::new(read_matrix(&q)?, read_matrix(&r)?, read_matrix(&t)?)?;
    let (z1, z2) = (read_points(p1)?, read_points(p2)?);
    let bary = lc_project(&f, &z1.points, &z2.points)?;
    let t_norm = row_stochastic(f.t());

    ensure_dir(out)?;
    write_matrix(out.join("Y1.csv"), bary.y1.view())?;
    write_matrix(out.join("Y2.csv"), bary.y2.view())?;
    write_matrix(out.join("T_normalized.csv"), t_norm.view())?;
    let (r1, r2) = f.ranks();
    let doc = json!({
        "schema": REPORT_SCHEMA,
        "command": "project",
        "config": echo,
        "problem": { "n": z1.len(), "m": z2.len(), "dim1": z1.dim(), "dim2": z2.dim(), "r1": r1, "r2": r2 },
        "result": { "files": ["Y1.csv", "Y2.csv", "T_normalized.csv"] },
    });
    write_report(out, &doc)?;
    println!("projected {} and {} points onto {r1} and {r2} anchors", z1.len(), z2.len());
    Ok(Outcome::Converged)
}
