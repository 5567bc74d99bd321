//! Clustering agreement scores. All three metrics work on a dense
//! contingency table and are exactly invariant under relabeling of either
//! input: integer arithmetic where possible, and floating-point term sums
//! accumulated in sorted order so permuted tables fold identically.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Flat scores for one clustering against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

/// Computes all three metrics at once.
pub fn score(pred: &[usize], truth: &[usize]) -> Result<MetricsReport> {
    Ok(MetricsReport {
        acc: acc(pred, truth)?,
        nmi: nmi(pred, truth)?,
        ari: ari(pred, truth)?,
    })
}

/// Clustering accuracy: the best fraction of agreeing samples over all
/// one-to-one matchings of predicted clusters to true classes, solved
/// exactly on the (padded square) contingency table.
pub fn acc(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let (counts, n) = contingency(pred, truth)?;
    let s = counts.len().max(counts[0].len());
    let mut cost = vec![vec![0i64; s]; s];
    for (i, row) in counts.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            cost[i][j] = -(v as i64);
        }
    }
    let assignment = hungarian_min(&cost);
    let mut matched = 0u64;
    for (i, row) in counts.iter().enumerate() {
        if let Some(&v) = row.get(assignment[i]) {
            matched += v;
        }
    }
    Ok(matched as f64 / n as f64)
}

/// Normalized mutual information I(pred; truth) / sqrt(H(pred) H(truth)),
/// natural logarithms. Conventions for degenerate partitions: 1 when both
/// sides are a single cluster (identical trivial partitions), 0 when exactly
/// one side has zero entropy (it carries no information about the other).
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let (counts, n) = contingency(pred, truth)?;
    let nf = n as f64;
    let row_sums: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..counts[0].len())
        .map(|j| counts.iter().map(|r| r[j]).sum())
        .collect();
    let h = |sums: &[u64]| -> f64 {
        sorted_sum(
            sums.iter()
                .filter(|&&s| s > 0)
                .map(|&s| {
                    let p = s as f64 / nf;
                    -p * p.ln()
                })
                .collect(),
        )
    };
    let hp = h(&row_sums);
    let ht = h(&col_sums);
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mut terms = Vec::new();
    for (i, row) in counts.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v == 0 {
                continue;
            }
            let pij = v as f64 / nf;
            terms.push(pij * (pij / (row_sums[i] as f64 / nf * (col_sums[j] as f64 / nf))).ln());
        }
    }
    let mi = sorted_sum(terms);
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

/// Adjusted Rand index from contingency pair counts. The chance-corrected
/// denominator is 0 exactly when both partitions are trivial (all one
/// cluster, or all singletons); agreement is then perfect by definition
/// and the score is 1.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let (counts, n) = contingency(pred, truth)?;
    let choose2 = |x: u64| -> i128 { (x as i128) * (x as i128 - 1) / 2 };
    let sum_ij: i128 = counts
        .iter()
        .flat_map(|r| r.iter().map(|&v| choose2(v)))
        .sum();
    let sum_a: i128 = counts.iter().map(|r| choose2(r.iter().sum())).sum();
    let sum_b: i128 = (0..counts[0].len())
        .map(|j| choose2(counts.iter().map(|r| r[j]).sum()))
        .sum();
    let total = choose2(n as u64);
    // (sum_ij - sum_a sum_b / total) / ((sum_a + sum_b)/2 - sum_a sum_b / total)
    // with denominators cleared, so the whole computation is one exact
    // integer ratio.
    let num = 2 * sum_ij * total - 2 * sum_a * sum_b;
    let den = (sum_a + sum_b) * total - 2 * sum_a * sum_b;
    if den == 0 {
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}

/// Dense contingency table: counts[p][t] over samples, with labels mapped to
/// 0.. in sorted-value order so arbitrary label values are accepted.
fn contingency(pred: &[usize], truth: &[usize]) -> Result<(Vec<Vec<u64>>, usize)> {
    if pred.len() != truth.len() {
        return Err(Error::RowCountMismatch(format!(
            "label lengths differ: {} predictions vs {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Degenerate("cannot score empty label lists".into()));
    }
    let dense = |labels: &[usize]| -> (BTreeMap<usize, usize>, usize) {
        let mut map = BTreeMap::new();
        for &l in labels {
            let next = map.len();
            map.entry(l).or_insert(next);
        }
        let k = map.len();
        (map, k)
    };
    let (pmap, kp) = dense(pred);
    let (tmap, kt) = dense(truth);
    let mut counts = vec![vec![0u64; kt]; kp];
    for (&p, &t) in pred.iter().zip(truth) {
        counts[pmap[&p]][tmap[&t]] += 1;
    }
    Ok((counts, pred.len()))
}

/// Sums after sorting by total order, so any permutation of the inputs folds
/// to the bit-identical result.
fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

const INF: i64 = i64::MAX / 4;

/// Exact minimum-cost perfect assignment on a square cost matrix, O(s^3)
/// shortest augmenting paths with potentials. Returns the column assigned to
/// each row.
fn hungarian_min(cost: &[Vec<i64>]) -> Vec<usize> {
    let s = cost.len();
    // 1-based arrays; p[j] is the row matched to column j, p[0] the row
    // currently seeking a column.
    let mut u = vec![0i64; s + 1];
    let mut v = vec![0i64; s + 1];
    let mut p = vec![0usize; s + 1];
    let mut way = vec![0usize; s + 1];
    for i in 1..=s {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; s + 1];
        let mut used = vec![false; s + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=s {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=s {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; s];
    for j in 1..=s {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}
