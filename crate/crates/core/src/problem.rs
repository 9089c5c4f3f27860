//! Problem description: marginals, ranks, objective, constraint mode and hyperparameters.

use std::fmt;
use std::str::FromStr;

use crate::error::{OtError, Result};
use crate::lc::Marginal;

/// Which marginal constraints are tight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Balanced,
    Unbalanced,
    /// Left marginal `a` relaxed, right marginal `b` tight.
    SemiRelaxedLeft,
    /// Right marginal `b` relaxed, left marginal `a` tight.
    SemiRelaxedRight,
}

impl Mode {
    pub fn left_tight(self) -> bool {
        matches!(self, Mode::Balanced | Mode::SemiRelaxedRight)
    }

    pub fn right_tight(self) -> bool {
        matches!(self, Mode::Balanced | Mode::SemiRelaxedLeft)
    }
}

impl FromStr for Mode {
    type Err = OtError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(Mode::Balanced),
            "unbalanced" => Ok(Mode::Unbalanced),
            "sr-left" => Ok(Mode::SemiRelaxedLeft),
            "sr-right" => Ok(Mode::SemiRelaxedRight),
            other => Err(OtError::invalid(format!(
                "unknown mode '{other}' (expected balanced, unbalanced, sr-left or sr-right)"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Balanced => "balanced",
            Mode::Unbalanced => "unbalanced",
            Mode::SemiRelaxedLeft => "sr-left",
            Mode::SemiRelaxedRight => "sr-right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Objective {
    #[default]
    Wasserstein,
    GromovWasserstein,
    /// `alpha · W + (1 − alpha) · GW`.
    Fused { alpha: f64 },
}

impl Objective {
    pub fn needs_linear(self) -> bool {
        !matches!(self, Objective::GromovWasserstein)
    }

    pub fn needs_intra(self) -> bool {
        !matches!(self, Objective::Wasserstein)
    }

    /// Parse `w`, `gw` or `fgw`; `alpha` is only used for `fgw`.
    pub fn parse(name: &str, alpha: f64) -> Result<Self> {
        match name {
            "w" => Ok(Objective::Wasserstein),
            "gw" => Ok(Objective::GromovWasserstein),
            "fgw" => Ok(Objective::Fused { alpha }),
            other => Err(OtError::invalid(format!("unknown objective '{other}' (expected w, gw or fgw)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::Wasserstein => "w",
            Objective::GromovWasserstein => "gw",
            Objective::Fused { .. } => "fgw",
        }
    }
}

/// Full description of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub a: Marginal,
    pub b: Marginal,
    pub r1: usize,
    pub r2: usize,
    pub mode: Mode,
    pub objective: Objective,
    /// Base mirror-descent step.
    pub gamma: f64,
    /// KL weight on the inner marginals of `Q` and `R` (factor relaxation).
    pub tau: f64,
    /// KL weight on whichever outer marginals are relaxed.
    pub tau2: f64,
    /// Inner projection tolerance.
    pub delta: f64,
    /// Outer stopping tolerance on the Δ criterion.
    pub epsilon: f64,
    pub min_iter: usize,
    pub max_iter: usize,
    pub max_inner_balanced: usize,
    pub max_inner_relaxed: usize,
    pub seed: u64,
}

impl ProblemSpec {
    /// Default hyperparameters for the given marginals and a square latent rank.
    pub fn new(a: Marginal, b: Marginal, rank: usize) -> Self {
        ProblemSpec {
            a,
            b,
            r1: rank,
            r2: rank,
            mode: Mode::Balanced,
            objective: Objective::Wasserstein,
            gamma: 90.0,
            tau: 75.0,
            tau2: 75.0,
            delta: 1e-9,
            epsilon: 1e-6,
            min_iter: 25,
            max_iter: 200,
            max_inner_balanced: 1000,
            max_inner_relaxed: 50,
            seed: 0,
        }
    }

    /// Uniform marginals of sizes `n` and `m`.
    pub fn uniform(n: usize, m: usize, rank: usize) -> Self {
        Self::new(Marginal::uniform(n), Marginal::uniform(m), rank)
    }

    pub fn with_ranks(mut self, r1: usize, r2: usize) -> Self {
        self.r1 = r1;
        self.r2 = r2;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_objective(mut self, objective: Objective) -> Self {
        self.objective = objective;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        if n == 0 || m == 0 {
            return Err(OtError::invalid("marginals must be non-empty"));
        }
        let cap = n.min(m);
        if self.r1 == 0 || self.r2 == 0 || self.r1 > cap || self.r2 > cap {
            return Err(OtError::invalid(format!(
                "ranks ({}, {}) must lie in 1..={cap} for a {n}x{m} problem",
                self.r1, self.r2
            )));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("epsilon", self.epsilon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(OtError::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("tau", self.tau), ("tau2", self.tau2)] {
            if !(v >= 0.0) || v.is_nan() {
                return Err(OtError::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.min_iter > self.max_iter || self.max_iter == 0 {
            return Err(OtError::invalid("need 1 <= max_iter and min_iter <= max_iter"));
        }
        if self.max_inner_balanced == 0 || self.max_inner_relaxed == 0 {
            return Err(OtError::invalid("inner iteration limits must be positive"));
        }
        if let Objective::Fused { alpha } = self.objective {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(OtError::invalid(format!("fused alpha must lie in (0, 1), got {alpha}")));
            }
        }
        let (sa, sb) = (self.a.mass(), self.b.mass());
        if self.mode == Mode::Balanced && (sa - sb).abs() > 1e-8 * sa.max(sb) {
            return Err(OtError::invalid(format!("balanced mode needs equal masses, got {sa} and {sb}")));
        }
        Ok(())
    }
}
