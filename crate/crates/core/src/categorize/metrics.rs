use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Contingency table: rows are predicted clusters, columns truth classes.
pub fn contingency(pred: &[usize], truth: &[usize]) -> Result<Vec<Vec<usize>>> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} labels", truth.len()),
            found: format!("{} labels", pred.len()),
        });
    }
    let index = |labels: &[usize]| -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for &l in labels {
            let next = m.len();
            m.entry(l).or_insert(next);
        }
        m
    };
    let (pi, ti) = (index(pred), index(truth));
    let mut table = vec![vec![0usize; ti.len()]; pi.len()];
    for (p, t) in pred.iter().zip(truth) {
        table[pi[p]][ti[t]] += 1;
    }
    Ok(table)
}

/// Minimum-cost perfect assignment on a square matrix; `result[row] = col`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
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
            }
            for j in 0..=n {
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
    let mut result = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            result[p[j] - 1] = j - 1;
        }
    }
    result
}

/// Best one-to-one cluster/class matching, as a fraction of points.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    if pred.is_empty() {
        return Err(Error::invalid("no labels"));
    }
    let size = table.len().max(table[0].len());
    let max = pred.len() as f64;
    let cost: Vec<Vec<f64>> = (0..size)
        .map(|r| {
            (0..size)
                .map(|c| max - table.get(r).and_then(|row| row.get(c)).copied().unwrap_or(0) as f64)
                .collect()
        })
        .collect();
    let assign = hungarian(&cost);
    let matched: usize = assign
        .iter()
        .enumerate()
        .map(|(r, &c)| table.get(r).and_then(|row| row.get(c)).copied().unwrap_or(0))
        .sum();
    Ok(matched as f64 / pred.len() as f64)
}

fn comb2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    if pred.len() < 2 {
        return Err(Error::invalid("ARI needs at least 2 points"));
    }
    let index: f64 = table.iter().flatten().map(|&c| comb2(c)).sum();
    let a: f64 = table.iter().map(|r| comb2(r.iter().sum())).sum();
    let b: f64 = (0..table[0].len())
        .map(|c| comb2(table.iter().map(|r| r[c]).sum()))
        .sum();
    let total = comb2(pred.len());
    let expected = a * b / total;
    let max = (a + b) / 2.0;
    if max == expected {
        // both partitions trivial in the same way
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the arithmetic mean of the two entropies.
///
/// When both entropies are zero the score is 1 for identical partitions
/// and 0 otherwise.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    if pred.len() < 2 {
        return Err(Error::invalid("NMI needs at least 2 points"));
    }
    let n = pred.len() as f64;
    let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<usize> = (0..table[0].len()).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let hp = entropy(rows.iter().copied(), n);
    let ht = entropy(cols.iter().copied(), n);
    let denom = (hp + ht) / 2.0;
    if denom == 0.0 {
        return Ok(if rows.len() == cols.len() { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for (r, row) in table.iter().enumerate() {
        for (c, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (rows[r] as f64 * cols[c] as f64)).ln();
            }
        }
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permuted_labels_score_one() {
        let truth = [0, 0, 1, 1, 2, 2, 2];
        let pred = [5, 5, 3, 3, 9, 9, 9];
        assert_eq!(clustering_accuracy(&pred, &truth).unwrap(), 1.0);
        assert!((ari(&pred, &truth).unwrap() - 1.0).abs() < 1e-12);
        assert!((nmi(&pred, &truth).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_prediction_balanced_classes() {
        let truth = [0, 0, 0, 1, 1, 1];
        let pred = [0; 6];
        assert_eq!(clustering_accuracy(&pred, &truth).unwrap(), 0.5);
        assert_eq!(nmi(&pred, &truth).unwrap(), 0.0);
        assert_eq!(ari(&pred, &truth).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_nmi() {
        assert_eq!(nmi(&[1, 1, 1], &[4, 4, 4]).unwrap(), 1.0);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(clustering_accuracy(&[0, 1], &[0]).is_err());
        assert!(ari(&[0, 1], &[0]).is_err());
        assert!(nmi(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn hungarian_small() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = hungarian(&cost);
        let total: f64 = a.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
        assert_eq!(total, 5.0);
    }
}
