//! Cost descriptions: a linear cost `C` (dense or factored `C₁·C₂ᵀ`) and optional
//! intra-domain matrices `A`, `B` for Gromov-Wasserstein terms.

use ndarray::{Array2, ArrayView2};

use crate::error::{OtError, Result};

/// A linear cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum CostMatrix {
    Dense(Array2<f64>),
    /// `C = left · rightᵀ` with `left: n×d`, `right: m×d`.
    Factored { left: Array2<f64>, right: Array2<f64> },
}

impl CostMatrix {
    pub fn factored(left: Array2<f64>, right: Array2<f64>) -> Result<Self> {
        if left.ncols() != right.ncols() {
            return Err(OtError::shape(format!(
                "factor widths differ: {} vs {}",
                left.ncols(),
                right.ncols()
            )));
        }
        Ok(CostMatrix::Factored { left, right })
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            CostMatrix::Dense(c) => c.dim(),
            CostMatrix::Factored { left, right } => (left.nrows(), right.nrows()),
        }
    }

    /// `C · M` for `M: m×k`.
    pub fn right_mul(&self, m: &Array2<f64>) -> Array2<f64> {
        match self {
            CostMatrix::Dense(c) => c.dot(m),
            CostMatrix::Factored { left, right } => left.dot(&right.t().dot(m)),
        }
    }

    /// `Cᵀ · M` for `M: n×k`.
    pub fn left_mul_t(&self, m: &Array2<f64>) -> Array2<f64> {
        match self {
            CostMatrix::Dense(c) => c.t().dot(m),
            CostMatrix::Factored { left, right } => right.dot(&left.t().dot(m)),
        }
    }

    /// The full `n×m` matrix. Allocates when factored.
    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            CostMatrix::Dense(c) => c.clone(),
            CostMatrix::Factored { left, right } => left.dot(&right.t()),
        }
    }

    /// `(min C, max C)`, scanning row by row so factored costs only hold one row at a time.
    pub fn range(&self) -> (f64, f64) {
        let fold = |(lo, hi): (f64, f64), x: &f64| (lo.min(*x), hi.max(*x));
        match self {
            CostMatrix::Dense(c) => c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), fold),
            CostMatrix::Factored { left, right } => left
                .rows()
                .into_iter()
                .map(|row| right.dot(&row))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |acc, row| row.iter().fold(acc, fold)),
        }
    }

    pub fn scaled(&self, s: f64) -> CostMatrix {
        match self {
            CostMatrix::Dense(c) => CostMatrix::Dense(c * s),
            CostMatrix::Factored { left, right } => CostMatrix::Factored { left: left * s, right: right.clone() },
        }
    }
}

/// Intra-domain distance matrices for GW terms.
#[derive(Debug, Clone, PartialEq)]
pub struct IntraCost {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub(crate) a_sq: Array2<f64>,
    pub(crate) b_sq: Array2<f64>,
    pub(crate) symmetric: bool,
}

impl IntraCost {
    pub fn new(a: Array2<f64>, b: Array2<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || b.nrows() != b.ncols() {
            return Err(OtError::shape("intra-domain costs must be square"));
        }
        if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(OtError::invalid("intra-domain costs must be finite"));
        }
        let symmetric = is_symmetric(a.view()) && is_symmetric(b.view());
        let a_sq = a.mapv(|x| x * x);
        let b_sq = b.mapv(|x| x * x);
        Ok(IntraCost { a, b, a_sq, b_sq, symmetric })
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }
}

fn is_symmetric(m: ArrayView2<'_, f64>) -> bool {
    m.indexed_iter().all(|((i, j), x)| *x == m[[j, i]])
}

/// Everything an objective may need: an optional linear cost and optional intra costs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostSpec {
    linear: Option<CostMatrix>,
    intra: Option<IntraCost>,
}

impl CostSpec {
    pub fn dense(c: Array2<f64>) -> Self {
        CostSpec { linear: Some(CostMatrix::Dense(c)), intra: None }
    }

    pub fn factored(left: Array2<f64>, right: Array2<f64>) -> Result<Self> {
        Ok(CostSpec { linear: Some(CostMatrix::factored(left, right)?), intra: None })
    }

    pub fn gw(a: Array2<f64>, b: Array2<f64>) -> Result<Self> {
        Ok(CostSpec { linear: None, intra: Some(IntraCost::new(a, b)?) })
    }

    pub fn with_linear(mut self, c: CostMatrix) -> Self {
        self.linear = Some(c);
        self
    }

    pub fn with_intra(mut self, a: Array2<f64>, b: Array2<f64>) -> Result<Self> {
        self.intra = Some(IntraCost::new(a, b)?);
        Ok(self)
    }

    pub fn linear(&self) -> Option<&CostMatrix> {
        self.linear.as_ref()
    }

    pub fn intra(&self) -> Option<&IntraCost> {
        self.intra.as_ref()
    }

    /// `(n, m)` implied by whichever parts are present.
    pub fn shape(&self) -> Option<(usize, usize)> {
        if let Some(c) = &self.linear {
            return Some(c.shape());
        }
        self.intra.as_ref().map(|i| (i.a.nrows(), i.b.nrows()))
    }

    /// Check the linear and intra parts agree with a plan of size `n×m`.
    pub fn check_shape(&self, n: usize, m: usize) -> Result<()> {
        if let Some(c) = &self.linear {
            if c.shape() != (n, m) {
                return Err(OtError::shape(format!("cost is {:?}, expected ({n}, {m})", c.shape())));
            }
        }
        if let Some(i) = &self.intra {
            if i.a.nrows() != n || i.b.nrows() != m {
                return Err(OtError::shape(format!(
                    "intra costs are {}x{} and {}x{}, expected sizes {n} and {m}",
                    i.a.nrows(),
                    i.a.ncols(),
                    i.b.nrows(),
                    i.b.ncols()
                )));
            }
        }
        Ok(())
    }
}
