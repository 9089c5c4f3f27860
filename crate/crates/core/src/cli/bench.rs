//! `frlc bench`: a rank × seed × initialization sweep on one dataset instance.

use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{problem_json, resolve, Knobs};
use super::solve::{Init, PRESET_SIZE};
use super::{ensure_dir, write_report, CliError, CliResult, Outcome, REPORT_SCHEMA};
use crate::cost::CostSpec;
use crate::datasets::{build_preset, Preset};
use crate::problem::{Mode, ProblemSpec};
use crate::solver::frlc_solve;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "FRLC_THREADS";

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BenchArgs {
    /// JSON file whose keys are flag names; flags given on the command line win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Dataset preset: moons-gaussians, mixture-2d, mixture-10d, roots or random-2d.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    /// Seed for the dataset generator (default 0); one instance serves every cell.
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Comma-separated latent ranks (default 20,50,100,200).
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    /// Number of solver seeds per rank (default 1).
    #[arg(long)]
    pub seeds: Option<usize>,
    /// First solver seed (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated initializations: random, rank2 (default random).
    #[arg(long, value_delimiter = ',')]
    pub init: Option<Vec<String>>,
    /// balanced, unbalanced, sr-left or sr-right.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub tau2: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub min_iter: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub max_inner_balanced: Option<usize>,
    #[arg(long)]
    pub max_inner_relaxed: Option<usize>,
    /// Output directory for bench.csv and report.json (CSV goes to stdout otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    rank: usize,
    seed: u64,
    init: Init,
}

#[derive(Debug, Clone)]
struct CellResult {
    cell: Cell,
    cost: f64,
    iters: usize,
    seconds: f64,
    converged: bool,
    error: Option<String>,
}

fn worker_count(cells: usize) -> usize {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cap.min(cells).max(1)
}

fn run_cell(base: &ProblemSpec, cost: &CostSpec, cell: Cell) -> CellResult {
    let start = Instant::now();
    let p = base.clone().with_ranks(cell.rank, cell.rank).with_seed(cell.seed);
    let outcome = cell.init.factors(&p, cost).and_then(|f| frlc_solve(&p, cost, Some(f)));
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(r) => CellResult { cell, cost: r.final_cost(), iters: r.iters, seconds, converged: r.converged, error: None },
        Err(e) => CellResult { cell, cost: f64::NAN, iters: 0, seconds, converged: false, error: Some(e.to_string()) },
    }
}

/// Mean and sample standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

pub(crate) fn run(flags: BenchArgs) -> CliResult<Outcome> {
    let (args, echo) = resolve(&flags, flags.config.as_deref())?;
    let name = args.dataset.as_deref().ok_or_else(|| CliError::Usage("missing --dataset".into()))?;
    let preset: Preset = name.parse()?;
    let ranks = args.ranks.clone().unwrap_or_else(|| vec![20, 50, 100, 200]);
    let inits = args
        .init
        .clone()
        .unwrap_or_else(|| vec!["random".into()])
        .iter()
        .map(|s| Init::parse(s))
        .collect::<CliResult<Vec<_>>>()?;
    let n_seeds = args.seeds.unwrap_or(1);
    let first_seed = args.seed.unwrap_or(0);
    if ranks.is_empty() || inits.is_empty() || n_seeds == 0 {
        return Err(CliError::Usage("--ranks, --seeds and --init must each be non-empty".into()));
    }
    let (n, m) = (args.n.unwrap_or(PRESET_SIZE), args.m.unwrap_or(PRESET_SIZE));
    let inst = build_preset(preset, n, m, args.data_seed.unwrap_or(0))?;
    let mut base = ProblemSpec::uniform(n, m, 1).with_mode(args.mode.as_deref().unwrap_or("balanced").parse::<Mode>()?);
    Knobs {
        gamma: args.gamma,
        tau: args.tau,
        tau2: args.tau2,
        delta: args.delta,
        epsilon: args.epsilon,
        min_iter: args.min_iter,
        max_iter: args.max_iter,
        max_inner_balanced: args.max_inner_balanced,
        max_inner_relaxed: args.max_inner_relaxed,
    }
    .apply(&mut base);
    for &r in &ranks {
        base.clone().with_ranks(r, r).validate()?;
        if r < 2 && inits.contains(&Init::Rank2) {
            return Err(CliError::Usage(format!("rank2 initialization needs rank >= 2, got {r}")));
        }
    }

    let mut cells = Vec::new();
    for &rank in &ranks {
        for s in 0..n_seeds as u64 {
            for &init in &inits {
                cells.push(Cell { rank, seed: first_seed.wrapping_add(s), init });
            }
        }
    }
    let slots: Vec<Mutex<Option<CellResult>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..worker_count(cells.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&cell) = cells.get(i) else { break };
                let result = run_cell(&base, &inst.cost, cell);
                *slots[i].lock().expect("no panics while holding the lock") = Some(result);
            });
        }
    });
    let mut results: Vec<CellResult> =
        slots.into_iter().map(|s| s.into_inner().expect("lock not poisoned").expect("every cell ran")).collect();
    results.sort_by(|x, y| {
        (x.cell.rank, x.cell.seed, x.cell.init.name()).cmp(&(y.cell.rank, y.cell.seed, y.cell.init.name()))
    });

    let mut csv = String::from("rank,seed,init,cost,iters,seconds\n");
    for r in &results {
        csv.push_str(&format!("{},{},{},{:e},{},{:.6}\n", r.cell.rank, r.cell.seed, r.cell.init.name(), r.cost, r.iters, r.seconds));
        if let Some(e) = &r.error {
            eprintln!("rank {} seed {} init {}: {e}", r.cell.rank, r.cell.seed, r.cell.init.name());
        }
    }
    let failed = results.iter().filter(|r| r.error.is_some()).count();
    let unconverged = results.iter().filter(|r| !r.converged).count();

    let mut summary = Vec::new();
    for &rank in &ranks {
        for &init in &inits {
            let costs: Vec<f64> = results
                .iter()
                .filter(|r| r.cell.rank == rank && r.cell.init == init && r.error.is_none())
                .map(|r| r.cost)
                .collect();
            let (mean, std) = if costs.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&costs) };
            summary.push(json!({ "rank": rank, "init": init.name(), "runs": costs.len(), "mean-cost": mean, "std-cost": std }));
        }
    }

    match &args.out {
        Some(dir) => {
            ensure_dir(dir)?;
            std::fs::write(dir.join("bench.csv"), &csv)?;
            let mut problem = problem_json(&base, &inits.iter().map(|i| i.name()).collect::<Vec<_>>().join(","));
            problem["r1"] = json!(ranks);
            problem["r2"] = json!(ranks);
            problem["seed"] = json!((0..n_seeds as u64).map(|s| first_seed.wrapping_add(s)).collect::<Vec<_>>());
            problem["dataset"] = json!(name);
            let doc: Value = json!({
                "schema": REPORT_SCHEMA,
                "command": "bench",
                "config": echo,
                "problem": problem,
                "result": { "cells": results.len(), "failed": failed, "unconverged": unconverged, "summary": summary },
            });
            write_report(dir, &doc)?;
        }
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    if unconverged > 0 {
        eprintln!("{unconverged} of {} cells did not converge ({failed} failed)", results.len());
    }
    Ok(Outcome::from_flag(unconverged == 0))
}
