//! Low-rank optimal transport with latent-coupling factorizations.
//!
//! A transport plan is kept as `P = Q·diag(1/g_Q)·T·diag(1/g_R)·Rᵀ`. [`solver::frlc_solve`]
//! minimizes Wasserstein, Gromov-Wasserstein or fused objectives over such plans with
//! balanced, unbalanced or semi-relaxed marginal constraints.

pub mod analysis;
pub mod cli;
pub mod cost;
pub mod datasets;
pub mod error;
pub mod io;
pub mod lc;
pub mod metrics;
pub mod objectives;
pub mod oracle;
pub mod partition;
pub mod problem;
pub mod projections;
pub mod solver;

pub use cost::{CostMatrix, CostSpec};
pub use error::{OtError, Result};
pub use lc::{LcFactors, Marginal};
pub use problem::{Mode, Objective, ProblemSpec};
pub use solver::{frlc_solve, SolveReport};
