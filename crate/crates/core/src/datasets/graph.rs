//! Edge-list graphs and the intra-domain costs built from them.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};

use crate::cost::CostSpec;
use crate::error::{OtError, Result};
use crate::lc::Marginal;

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub directed: bool,
}

/// Parse an edge list: one `u v [w]` per line (weight defaults to 1), `#` starts a
/// comment, and a `# directed` line marks the graph as directed. Nodes are numbered
/// from zero; the node count is one more than the largest id seen.
pub fn parse_graph(text: &str) -> Result<GraphSpec> {
    let mut edges = Vec::new();
    let mut directed = false;
    let mut n = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if comment.trim().eq_ignore_ascii_case("directed") {
                directed = true;
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| OtError::Parse { line: idx + 1, msg };
        let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(err(format!("expected 'u v [w]', got '{line}'")));
        }
        let node = |s: &str| s.parse::<usize>().map_err(|_| err(format!("invalid node id '{s}'")));
        let (u, v) = (node(fields[0])?, node(fields[1])?);
        let w = match fields.get(2) {
            Some(s) => s.parse::<f64>().map_err(|_| err(format!("invalid weight '{s}'")))?,
            None => 1.0,
        };
        if !(w > 0.0 && w.is_finite()) {
            return Err(err(format!("edge weights must be positive, got {w}")));
        }
        n = n.max(u + 1).max(v + 1);
        edges.push((u, v, w));
    }
    Ok(GraphSpec { n, edges, directed })
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<GraphSpec> {
    parse_graph(&std::fs::read_to_string(path)?)
}

impl GraphSpec {
    /// Weighted adjacency matrix: symmetric for undirected graphs, raw `u → v` otherwise.
    /// Repeated edges add up.
    pub fn adjacency(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for &(u, v, w) in &self.edges {
            a[[u, v]] += w;
            if !self.directed && u != v {
                a[[v, u]] += w;
            }
        }
        a
    }

    /// Nodes with no incident edge.
    pub fn isolated_nodes(&self) -> Vec<usize> {
        let mut touched = vec![false; self.n];
        for &(u, v, _) in &self.edges {
            touched[u] = true;
            touched[v] = true;
        }
        (0..self.n).filter(|&i| !touched[i]).collect()
    }

    /// Symmetrized adjacency with a unit self-loop on isolated nodes, used for degrees
    /// and the normalized Laplacian.
    fn symmetric_weights(&self) -> Array2<f64> {
        let a = self.adjacency();
        let mut s = if self.directed { (&a + &a.t()) * 0.5 } else { a };
        for i in 0..self.n {
            if s.row(i).sum() <= 0.0 {
                s[[i, i]] = 1.0;
            }
        }
        s
    }

    pub fn degrees(&self) -> Array1<f64> {
        self.symmetric_weights().sum_axis(ndarray::Axis(1))
    }
}

/// The adjacency matrix as an intra-domain cost.
pub fn adjacency_cost(g: &GraphSpec, template: Array2<f64>) -> Result<CostSpec> {
    CostSpec::gw(g.adjacency(), template)
}

/// `exp(−t·L_sym)` with `L_sym = I − D^{-1/2} W D^{-1/2}`, computed by symmetric
/// eigendecomposition. Directed graphs are symmetrized first and isolated nodes get a
/// unit self-loop.
pub fn heat_kernel(g: &GraphSpec, t: f64) -> Result<Array2<f64>> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(OtError::invalid(format!("heat parameter must be finite and non-negative, got {t}")));
    }
    let w = g.symmetric_weights();
    let n = g.n;
    let inv_sqrt: Vec<f64> = w.rows().into_iter().map(|r| 1.0 / r.sum().sqrt()).collect();
    let lap = DMatrix::from_fn(n, n, |i, j| {
        let norm = inv_sqrt[i] * w[[i, j]] * inv_sqrt[j];
        if i == j { 1.0 - norm } else { -norm }
    });
    let eig = SymmetricEigen::new(lap);
    let weights = eig.eigenvalues.map(|l| (-t * l).exp());
    let v = &eig.eigenvectors;
    let k = v * DMatrix::from_diagonal(&weights) * v.transpose();
    Ok(Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (k[(i, j)] + k[(j, i)])))
}

pub fn heat_kernel_cost(g: &GraphSpec, t: f64, template: Array2<f64>) -> Result<CostSpec> {
    CostSpec::gw(heat_kernel(g, t)?, template)
}

/// Node weights proportional to degree (isolated nodes count their self-loop).
pub fn degree_marginal(g: &GraphSpec) -> Result<Marginal> {
    Marginal::normalized(g.degrees())
}
