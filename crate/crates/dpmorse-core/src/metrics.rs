//! Clustering agreement scores.
//!
//! The adjusted Rand index is computed from the label contingency table
//! with integer arithmetic throughout (one final division), so reference
//! values like -0.5 come out exact.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Co-occurrence counts of two labelings after factorizing each side's
/// label ids in order of first appearance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contingency {
    /// rows: clusters of `a`; columns: clusters of `b`.
    pub table: Vec<Vec<u64>>,
    pub row_marginals: Vec<u64>,
    pub col_marginals: Vec<u64>,
    pub total: u64,
}

/// Adjusted Rand index value with its degeneracy flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AriScore {
    /// In [-1, 1]; 0 when degenerate.
    pub value: f64,
    /// True when the adjustment denominator vanishes (both partitions
    /// all-singletons or both one-cluster), where the index is undefined
    /// and reported as 0.
    pub degenerate: bool,
}

fn factorize(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut seen: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(labels.len());
    for &l in labels {
        match seen.iter().position(|&s| s == l) {
            Some(i) => out.push(i),
            None => {
                seen.push(l);
                out.push(seen.len() - 1);
            }
        }
    }
    (out, seen.len())
}

/// Builds the contingency table of two equal-length labelings.
pub fn contingency(a: &[usize], b: &[usize]) -> Result<Contingency> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument("labelings must have equal length"));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("labelings must be non-empty"));
    }
    let (fa, r) = factorize(a);
    let (fb, c) = factorize(b);
    let mut table = vec![vec![0u64; c]; r];
    for (&i, &j) in fa.iter().zip(fb.iter()) {
        table[i][j] += 1;
    }
    let row_marginals: Vec<u64> = table.iter().map(|row| row.iter().sum()).collect();
    let mut col_marginals = vec![0u64; c];
    for row in &table {
        for (j, &v) in row.iter().enumerate() {
            col_marginals[j] += v;
        }
    }
    Ok(Contingency { table, row_marginals, col_marginals, total: a.len() as u64 })
}

fn choose2(n: u64) -> u128 {
    let n = n as u128;
    n * n.saturating_sub(1) / 2
}

/// Adjusted Rand index of two labelings.
///
/// With S = sum of C(n_ij,2), Sa/Sb the marginal pair sums and C = C(N,2),
/// the index (S - Sa*Sb/C) / ((Sa+Sb)/2 - Sa*Sb/C) is evaluated as the
/// integer ratio (2C*S - 2*Sa*Sb) / (C*(Sa+Sb) - 2*Sa*Sb). Identical
/// partitions score 1; a vanishing denominator scores 0 and is flagged.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<AriScore> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument("labelings must have equal length"));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("need at least two points to compare partitions"));
    }
    let ct = contingency(a, b)?;
    let s: u128 = ct.table.iter().flatten().map(|&v| choose2(v)).sum();
    let sa: u128 = ct.row_marginals.iter().map(|&v| choose2(v)).sum();
    let sb: u128 = ct.col_marginals.iter().map(|&v| choose2(v)).sum();
    let c = choose2(ct.total);
    let num = 2 * (c as i128) * (s as i128) - 2 * (sa as i128) * (sb as i128);
    let den = (c as i128) * (sa as i128 + sb as i128) - 2 * (sa as i128) * (sb as i128);
    if den == 0 {
        return Ok(AriScore { value: 0.0, degenerate: true });
    }
    Ok(AriScore { value: num as f64 / den as f64, degenerate: false })
}
