//! `frlc solve`.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{problem_json, resolve, Knobs};
use super::{ensure_dir, write_report, CliError, CliResult, Outcome, REPORT_SCHEMA};
use crate::cost::CostSpec;
use crate::datasets::{build_preset, euclidean_matrix, normalize_by_max, Preset, PresetInstance};
use crate::io::{read_matrix, read_vector, write_matrix, write_points};
use crate::lc::{LcFactors, Marginal};
use crate::problem::{Mode, Objective, ProblemSpec};
use crate::solver::{frlc_solve, initialize_couplings, rank2_init, SolveReport};

/// Default sizes for dataset presets.
pub(crate) const PRESET_SIZE: usize = 1000;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SolveArgs {
    /// JSON file whose keys are flag names; flags given on the command line win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Dense linear cost matrix (CSV, or `.mat`).
    #[arg(long)]
    pub cost: Option<PathBuf>,
    /// Left factor `C₁` of a factored cost `C = C₁·C₂ᵀ`.
    #[arg(long)]
    pub cost_left: Option<PathBuf>,
    #[arg(long)]
    pub cost_right: Option<PathBuf>,
    /// Build the problem from a preset instead: moons-gaussians, mixture-2d,
    /// mixture-10d, roots or random-2d.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Source and target sizes for `--dataset` (default 1000 each).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    /// Seed for the dataset generator (defaults to `--seed`).
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Left marginal (default uniform).
    #[arg(long)]
    pub a: Option<PathBuf>,
    /// Right marginal (default uniform).
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// Intra-domain cost on the left side for GW terms.
    #[arg(long)]
    pub intra_a: Option<PathBuf>,
    #[arg(long)]
    pub intra_b: Option<PathBuf>,
    /// Sets both latent ranks.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub r1: Option<usize>,
    #[arg(long)]
    pub r2: Option<usize>,
    /// balanced, unbalanced, sr-left or sr-right.
    #[arg(long)]
    pub mode: Option<String>,
    /// w, gw or fgw.
    #[arg(long)]
    pub objective: Option<String>,
    /// Wasserstein weight for fgw.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// KL weight on inner marginals; also the outer weight unless `--tau2` is given.
    #[arg(long)]
    pub tau: Option<f64>,
    /// KL weight on relaxed outer marginals.
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
    #[arg(long)]
    pub seed: Option<u64>,
    /// random or rank2.
    #[arg(long)]
    pub init: Option<String>,
    /// Divide every cost matrix by its largest entry.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize_cost: Option<bool>,
    /// Output directory for report.json, Q.csv, R.csv and T.csv (plus points1.csv and
    /// points2.csv with `--dataset`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SolveArgs {
    fn knobs(&self) -> Knobs {
        Knobs {
            gamma: self.gamma,
            tau: self.tau,
            tau2: self.tau2,
            delta: self.delta,
            epsilon: self.epsilon,
            min_iter: self.min_iter,
            max_iter: self.max_iter,
            max_inner_balanced: self.max_inner_balanced,
            max_inner_relaxed: self.max_inner_relaxed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Init {
    Random,
    Rank2,
}

impl Init {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "random" => Ok(Init::Random),
            "rank2" => Ok(Init::Rank2),
            other => Err(CliError::Usage(format!("unknown --init '{other}' (expected random or rank2)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Init::Random => "random",
            Init::Rank2 => "rank2",
        }
    }

    pub fn factors(self, p: &ProblemSpec, c: &CostSpec) -> crate::Result<LcFactors> {
        match self {
            Init::Random => {
                let b = Marginal::new(p.b.as_array() * (p.a.mass() / p.b.mass()))?;
                initialize_couplings(&p.a, &b, p.r1, p.r2, p.seed)
            }
            Init::Rank2 => rank2_init(&p.a, &p.b, p.r1, p.r2, c),
        }
    }
}

fn load_costs(args: &SolveArgs, objective: Objective, seed: u64) -> CliResult<(CostSpec, Option<PresetInstance>)> {
    if args.cost_left.is_some() != args.cost_right.is_some() {
        return Err(CliError::Usage("--cost-left and --cost-right must be given together".into()));
    }
    if args.intra_a.is_some() != args.intra_b.is_some() {
        return Err(CliError::Usage("--intra-a and --intra-b must be given together".into()));
    }
    if args.cost.is_some() && args.cost_left.is_some() {
        return Err(CliError::Usage("give either --cost or --cost-left/--cost-right, not both".into()));
    }
    let mut points = None;
    let mut spec = if let Some(name) = &args.dataset {
        if args.cost.is_some() || args.cost_left.is_some() {
            return Err(CliError::Usage("--dataset cannot be combined with --cost or --cost-left/--cost-right".into()));
        }
        let preset: Preset = name.parse()?;
        let (n, m) = (args.n.unwrap_or(PRESET_SIZE), args.m.unwrap_or(PRESET_SIZE));
        let inst = build_preset(preset, n, m, args.data_seed.unwrap_or(seed))?;
        let linear = inst.cost.linear().expect("presets carry a linear cost").clone();
        let mut spec = if objective.needs_linear() { CostSpec::default().with_linear(linear) } else { CostSpec::default() };
        if objective.needs_intra() && args.intra_a.is_none() {
            let (z1, z2) = (&inst.source.points, &inst.target.points);
            spec = spec.with_intra(
                normalize_by_max(euclidean_matrix(z1, z1, false)?),
                normalize_by_max(euclidean_matrix(z2, z2, false)?),
            )?;
        }
        points = Some(inst);
        spec
    } else if let Some(path) = &args.cost {
        CostSpec::dense(read_matrix(path)?)
    } else if let (Some(l), Some(r)) = (&args.cost_left, &args.cost_right) {
        CostSpec::factored(read_matrix(l)?, read_matrix(r)?)?
    } else if objective.needs_linear() || args.intra_a.is_none() {
        return Err(CliError::Usage(
            "missing --cost (or --cost-left/--cost-right, or --dataset)".into(),
        ));
    } else {
        CostSpec::default()
    };
    if let (Some(a), Some(b)) = (&args.intra_a, &args.intra_b) {
        spec = spec.with_intra(read_matrix(a)?, read_matrix(b)?)?;
    }
    if args.normalize_cost.unwrap_or(false) {
        spec = normalize_spec(spec)?;
    }
    Ok((spec, points))
}

fn normalize_spec(spec: CostSpec) -> CliResult<CostSpec> {
    let mut out = CostSpec::default();
    if let Some(c) = spec.linear() {
        let (_, hi) = c.range();
        out = out.with_linear(if hi > 0.0 { c.scaled(1.0 / hi) } else { c.clone() });
    }
    if let Some(i) = spec.intra() {
        out = out.with_intra(normalize_by_max(i.a.clone()), normalize_by_max(i.b.clone()))?;
    }
    Ok(out)
}

fn load_marginal(path: Option<&Path>, len: usize, side: &str) -> CliResult<Marginal> {
    match path {
        None => Ok(Marginal::uniform(len)),
        Some(p) => {
            let v = read_vector(p)?;
            if v.len() != len {
                return Err(CliError::Usage(format!("--{side} has {} entries, the cost needs {len}", v.len())));
            }
            Ok(Marginal::new(v)?)
        }
    }
}

/// Everything `solve` resolves before running.
pub(crate) struct Resolved {
    pub problem: ProblemSpec,
    pub cost: CostSpec,
    pub init: Init,
    /// The generated point clouds when a dataset preset was used.
    pub points: Option<PresetInstance>,
}

pub(crate) fn resolve_problem(args: &SolveArgs) -> CliResult<Resolved> {
    let seed = args.seed.unwrap_or(0);
    let objective = Objective::parse(args.objective.as_deref().unwrap_or("w"), args.alpha.unwrap_or(0.5))?;
    let mode: Mode = args.mode.as_deref().unwrap_or("balanced").parse()?;
    let init = Init::parse(args.init.as_deref().unwrap_or("random"))?;
    let (cost, points) = load_costs(args, objective, seed)?;
    let (n, m) = cost.shape().ok_or_else(|| CliError::Usage("missing --cost".into()))?;
    let a = load_marginal(args.a.as_deref(), n, "a")?;
    let b = load_marginal(args.b.as_deref(), m, "b")?;
    let rank = args.rank.unwrap_or(n.min(m).min(10));
    let mut problem = ProblemSpec::new(a, b, rank)
        .with_ranks(args.r1.unwrap_or(rank), args.r2.unwrap_or(rank))
        .with_mode(mode)
        .with_objective(objective)
        .with_seed(seed);
    args.knobs().apply(&mut problem);
    problem.validate()?;
    Ok(Resolved { problem, cost, init, points })
}

fn result_json(r: &SolveReport) -> Value {
    json!({
        "cost": r.final_cost(),
        "iters": r.iters,
        "converged": r.converged,
        "left-residual": r.left_residual,
        "right-residual": r.right_residual,
        "wall-time": r.wall_time,
        "seed": r.seed_used,
        "inner-not-converged": r.inner_not_converged,
        "cost-trace": r.cost_trace,
        "delta-trace": r.delta_trace,
    })
}

pub(crate) fn run(flags: SolveArgs) -> CliResult<Outcome> {
    let (args, echo) = resolve(&flags, flags.config.as_deref())?;
    let Resolved { problem, cost, init, points } = resolve_problem(&args)?;
    let start = init.factors(&problem, &cost)?;
    let report = frlc_solve(&problem, &cost, Some(start))?;
    println!(
        "cost {:.6e}  iters {}  converged {}  residuals {:.2e} / {:.2e}  time {:.2}s",
        report.final_cost(),
        report.iters,
        report.converged,
        report.left_residual,
        report.right_residual,
        report.wall_time
    );
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        let f = &report.factors;
        write_matrix(dir.join("Q.csv"), f.q().view())?;
        write_matrix(dir.join("R.csv"), f.r().view())?;
        write_matrix(dir.join("T.csv"), f.t().view())?;
        if let Some(inst) = &points {
            write_points(dir.join("points1.csv"), &inst.source)?;
            write_points(dir.join("points2.csv"), &inst.target)?;
        }
        let doc = json!({
            "schema": REPORT_SCHEMA,
            "command": "solve",
            "config": echo,
            "problem": problem_json(&problem, init.name()),
            "result": result_json(&report),
        });
        write_report(dir, &doc)?;
    }
    if !report.converged {
        eprintln!("warning: stopped at max-iter {} before the stopping criterion was met", problem.max_iter);
    }
    Ok(Outcome::from_flag(report.converged))
}
