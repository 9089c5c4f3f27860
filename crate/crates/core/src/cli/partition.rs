//! `frlc partition`.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::resolve;
use super::{ensure_dir, write_report, CliError, CliResult, Outcome, REPORT_SCHEMA};
use crate::datasets::load_graph;
use crate::io::{read_labels, write_labels};
use crate::metrics::{adjusted_mutual_info, adjusted_rand_index};
use crate::partition::{partition_runs, GraphCost, PartitionConfig};

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PartitionArgs {
    /// JSON file whose keys are flag names; flags given on the command line win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Edge list: `u v [w]` per line, `#` comments.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub clusters: Option<usize>,
    /// adjacency or heat.
    #[arg(long)]
    pub cost: Option<String>,
    /// Heat-kernel time (default 10).
    #[arg(long)]
    pub t: Option<f64>,
    /// Seeded runs; labels come from the run with the lowest objective (default 1).
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// KL weight on the relaxed template marginal (default 0.01).
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Ground-truth labels, one per node, for AMI and ARI.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output directory for labels.csv and report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn graph_cost(name: &str, t: f64) -> CliResult<GraphCost> {
    match name {
        "adjacency" => Ok(GraphCost::Adjacency),
        "heat" => Ok(GraphCost::Heat { t }),
        other => Err(CliError::Usage(format!("unknown --cost '{other}' (expected adjacency or heat)"))),
    }
}

pub(crate) fn run(flags: PartitionArgs) -> CliResult<Outcome> {
    let (args, echo) = resolve(&flags, flags.config.as_deref())?;
    let edges = args.edges.as_ref().ok_or_else(|| CliError::Usage("missing --edges".into()))?;
    let clusters = args.clusters.ok_or_else(|| CliError::Usage("missing --clusters".into()))?;
    let cost = graph_cost(args.cost.as_deref().unwrap_or("adjacency"), args.t.unwrap_or(10.0))?;
    let graph = load_graph(edges)?;
    let truth = match &args.truth {
        Some(path) => {
            let labels = read_labels(path)?;
            if labels.len() != graph.n {
                return Err(CliError::Usage(format!("--truth has {} labels for {} nodes", labels.len(), graph.n)));
            }
            Some(labels)
        }
        None => None,
    };

    let mut cfg = PartitionConfig::new(clusters, cost);
    cfg.runs = args.runs.unwrap_or(cfg.runs);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.tau = args.tau.unwrap_or(cfg.tau);
    cfg.gamma = args.gamma.unwrap_or(cfg.gamma);
    cfg.max_iter = args.max_iter.unwrap_or(cfg.max_iter);
    let runs = partition_runs(&graph, &cfg)?;
    let best = runs
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.objective.total_cmp(&y.1.objective))
        .map(|(i, _)| i)
        .expect("at least one run");

    let mut per_run = Vec::new();
    let (mut amis, mut aris) = (Vec::new(), Vec::new());
    for run in &runs {
        let mut entry = json!({
            "seed": run.seed,
            "objective": run.objective,
            "iters": run.report.iters,
            "converged": run.report.converged,
            "clusters-used": run.labels.iter().collect::<std::collections::BTreeSet<_>>().len(),
        });
        if let Some(t) = &truth {
            let (ami, ari) = (adjusted_mutual_info(t, &run.labels)?, adjusted_rand_index(t, &run.labels)?);
            entry["ami"] = json!(ami);
            entry["ari"] = json!(ari);
            amis.push(ami);
            aris.push(ari);
        }
        per_run.push(entry);
    }
    let mean = |xs: &[f64]| if xs.is_empty() { None } else { Some(xs.iter().sum::<f64>() / xs.len() as f64) };
    let best_run = &runs[best];
    println!("nodes {}  clusters {}  best objective {:.6e} (seed {})", graph.n, clusters, best_run.objective, best_run.seed);
    if let Some(m) = mean(&amis) {
        println!("mean AMI {m:.4}  best-run AMI {:.4}", amis[best]);
    }

    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        write_labels(dir.join("labels.csv"), &best_run.labels)?;
        let doc = json!({
            "schema": REPORT_SCHEMA,
            "command": "partition",
            "config": echo,
            "problem": {
                "nodes": graph.n,
                "edges": graph.edges.len(),
                "clusters": clusters,
                "cost": args.cost.as_deref().unwrap_or("adjacency"),
                "t": match cost { GraphCost::Heat { t } => Some(t), GraphCost::Adjacency => None },
                "tau": cfg.tau,
                "gamma": cfg.gamma,
                "max-iter": cfg.max_iter,
                "runs": cfg.runs,
                "seed": cfg.seed,
            },
            "result": {
                "best-run": best,
                "objective": best_run.objective,
                "runs": per_run,
                "mean-ami": mean(&amis),
                "mean-ari": mean(&aris),
                "best-ami": amis.get(best),
                "best-ari": aris.get(best),
            },
        });
        write_report(dir, &doc)?;
    }
    Ok(Outcome::from_flag(best_run.report.converged))
}
