//! Clustering agreement scores: adjusted mutual information and adjusted Rand index.

use std::collections::HashMap;

use statrs::function::gamma::ln_gamma;

use crate::error::{OtError, Result};

/// Contingency table between two labelings, with row and column totals.
struct Contingency {
    table: Vec<Vec<usize>>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    n: usize,
}

fn relabel(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = HashMap::new();
    let dense = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (dense, ids.len())
}

fn contingency(truth: &[usize], pred: &[usize]) -> Result<Contingency> {
    if truth.len() != pred.len() {
        return Err(OtError::shape(format!("{} true labels vs {} predicted", truth.len(), pred.len())));
    }
    let (t, kt) = relabel(truth);
    let (p, kp) = relabel(pred);
    let mut table = vec![vec![0usize; kp]; kt];
    for (&i, &j) in t.iter().zip(&p) {
        table[i][j] += 1;
    }
    let rows = table.iter().map(|r| r.iter().sum()).collect();
    let cols = (0..kp).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    Ok(Contingency { table, rows, cols, n: truth.len() })
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    counts.iter().filter(|&&c| c > 0).map(|&c| {
        let p = c as f64 / n;
        -p * p.ln()
    }).sum()
}

fn mutual_information(c: &Contingency) -> f64 {
    let n = c.n as f64;
    let mut mi = 0.0;
    for (i, row) in c.table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (c.rows[i] as f64 * c.cols[j] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Mutual information expected under the hypergeometric (permutation) model.
fn expected_mutual_information(c: &Contingency) -> f64 {
    let n = c.n;
    let nf = n as f64;
    let lg = |x: usize| ln_gamma(x as f64 + 1.0);
    let mut emi = 0.0;
    for &a in &c.rows {
        for &b in &c.cols {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let fixed = lg(a) + lg(b) + lg(n - a) + lg(n - b) - lg(n);
            for nij in lo..=hi {
                let x = nij as f64;
                let log_p = fixed - lg(nij) - lg(a - nij) - lg(b - nij) - lg(n + nij - a - b);
                emi += x / nf * (nf * x / (a as f64 * b as f64)).ln() * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information with arithmetic-mean normalization.
pub fn adjusted_mutual_info(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let c = contingency(truth, pred)?;
    let (kt, kp) = (c.rows.len(), c.cols.len());
    // Identical single-cluster (or empty) labelings agree perfectly.
    if (kt == 1 && kp == 1) || (kt == 0 && kp == 0) {
        return Ok(1.0);
    }
    let mi = mutual_information(&c);
    let emi = expected_mutual_information(&c);
    let norm = 0.5 * (entropy(&c.rows, c.n) + entropy(&c.cols, c.n));
    let mut denom = norm - emi;
    denom = if denom < 0.0 { denom.min(-f64::EPSILON) } else { denom.max(f64::EPSILON) };
    Ok((mi - emi) / denom)
}

/// Adjusted Rand index.
pub fn adjusted_rand_index(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let c = contingency(truth, pred)?;
    let pairs = |x: usize| (x * x.saturating_sub(1) / 2) as f64;
    let index: f64 = c.table.iter().flatten().map(|&x| pairs(x)).sum();
    let sum_rows: f64 = c.rows.iter().map(|&x| pairs(x)).sum();
    let sum_cols: f64 = c.cols.iter().map(|&x| pairs(x)).sum();
    let total = pairs(c.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_rows * sum_cols / total;
    let max = 0.5 * (sum_rows + sum_cols);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
