//! Merging `--config` JSON with command-line flags.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use super::{CliError, CliResult};
use crate::problem::ProblemSpec;

/// Overlay the flags that were given on top of the config file (if any). Returns the
/// effective arguments and the merged JSON object that produced them.
pub(crate) fn resolve<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> CliResult<(T, Value)> {
    let mut merged = match config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            match value {
                Value::Object(map) => map,
                _ => return Err(CliError::Config(format!("{} must hold a JSON object", path.display()))),
            }
        }
        None => Map::new(),
    };
    // Absent flags serialize as null and must not clobber config keys.
    if let Value::Object(given) = serde_json::to_value(flags)? {
        merged.extend(given.into_iter().filter(|(_, v)| !v.is_null()));
    }
    let merged = Value::Object(merged);
    let args = serde_json::from_value(merged.clone())?;
    Ok((args, merged))
}

/// Solver hyperparameters shared by `solve` and `bench`; `None` keeps the default.
#[derive(Debug, Clone, Default)]
pub(crate) struct Knobs {
    pub gamma: Option<f64>,
    pub tau: Option<f64>,
    pub tau2: Option<f64>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub min_iter: Option<usize>,
    pub max_iter: Option<usize>,
    pub max_inner_balanced: Option<usize>,
    pub max_inner_relaxed: Option<usize>,
}

impl Knobs {
    /// `tau2` falls back to `tau`, so a single `--tau` weights every relaxed marginal.
    pub fn apply(&self, p: &mut ProblemSpec) {
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut p.gamma, self.gamma);
        set(&mut p.tau, self.tau);
        set(&mut p.tau2, self.tau2.or(self.tau));
        set(&mut p.delta, self.delta);
        set(&mut p.epsilon, self.epsilon);
        p.min_iter = self.min_iter.unwrap_or(p.min_iter);
        p.max_iter = self.max_iter.unwrap_or(p.max_iter);
        p.min_iter = p.min_iter.min(p.max_iter);
        p.max_inner_balanced = self.max_inner_balanced.unwrap_or(p.max_inner_balanced);
        p.max_inner_relaxed = self.max_inner_relaxed.unwrap_or(p.max_inner_relaxed);
    }
}

/// The resolved problem as written to `report.json`.
pub(crate) fn problem_json(p: &ProblemSpec, init: &str) -> Value {
    let alpha = match p.objective {
        crate::problem::Objective::Fused { alpha } => Some(alpha),
        _ => None,
    };
    serde_json::json!({
        "n": p.n(),
        "m": p.m(),
        "r1": p.r1,
        "r2": p.r2,
        "mode": p.mode.to_string(),
        "objective": p.objective.name(),
        "alpha": alpha,
        "gamma": p.gamma,
        "tau": p.tau,
        "tau2": p.tau2,
        "delta": p.delta,
        "epsilon": p.epsilon,
        "min-iter": p.min_iter,
        "max-iter": p.max_iter,
        "max-inner-balanced": p.max_inner_balanced,
        "max-inner-relaxed": p.max_inner_relaxed,
        "seed": p.seed,
        "init": init,
        "mass-a": p.a.mass(),
        "mass-b": p.b.mass(),
    })
}
