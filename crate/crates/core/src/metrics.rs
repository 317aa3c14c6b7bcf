//! External clustering metrics and the significance test used by the
//! benchmark summary.

use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub acc: f64,
    pub nmi: f64,
    pub n: usize,
    pub c_true: usize,
    pub c_pred: usize,
}

/// Maps arbitrary labels onto `0..k` in order of first sorted value.
fn densify(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let dense = labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("present"))
        .collect();
    (dense, distinct.len())
}

/// Contingency counts `table[class][cluster]` plus class and cluster counts.
pub fn contingency(truth: &[usize], pred: &[usize]) -> Result<(Vec<Vec<u64>>, usize, usize)> {
    if truth.len() != pred.len() {
        return Err(Error::Dimension(format!(
            "{} true labels vs {} predicted labels",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("cannot score an empty labeling".into()));
    }
    let (t, rows) = densify(truth);
    let (p, cols) = densify(pred);
    let mut table = vec![vec![0u64; cols]; rows];
    for (&a, &b) in t.iter().zip(&p) {
        table[a][b] += 1;
    }
    Ok((table, rows, cols))
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials). Returns `assignment[row] = col`.
pub fn min_cost_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    const INF: i64 = i64::MAX / 4;
    // 1-based arrays; index 0 is the virtual root.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = INF;
            let mut col1 = 0;
            for col in 1..=n {
                if !used[col] {
                    let cur = cost[r - 1][col - 1] - u[r] - v[col];
                    if cur < minv[col] {
                        minv[col] = cur;
                        way[col] = col0;
                    }
                    if minv[col] < delta {
                        delta = minv[col];
                        col1 = col;
                    }
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for col in 1..=n {
        if owner[col] > 0 {
            assignment[owner[col] - 1] = col - 1;
        }
    }
    assignment
}

/// Fraction of examples matched under the best one-to-one mapping from
/// predicted clusters to true classes.
pub fn clustering_accuracy(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let (table, rows, cols) = contingency(truth, pred)?;
    let size = rows.max(cols);
    let cost: Vec<Vec<i64>> = (0..size)
        .map(|r| {
            (0..size)
                .map(|c| if r < rows && c < cols { -(table[r][c] as i64) } else { 0 })
                .collect()
        })
        .collect();
    let assignment = min_cost_assignment(&cost);
    let matched: u64 = assignment
        .iter()
        .enumerate()
        .filter(|&(r, &c)| r < rows && c < cols)
        .map(|(r, &c)| table[r][c])
        .sum();
    Ok(matched as f64 / truth.len() as f64)
}

fn entropy(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by `sqrt(H(truth) · H(pred))`, natural logs.
///
/// Two single-cluster labelings score 1; a single-cluster labeling against a
/// non-trivial one scores 0.
pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let (table, rows, cols) = contingency(truth, pred)?;
    let n = truth.len() as f64;
    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..cols).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let h_true = entropy(row_sums.iter().copied(), n);
    let h_pred = entropy(col_sums.iter().copied(), n);
    if rows == 1 && cols == 1 {
        return Ok(1.0);
    }
    if h_true == 0.0 || h_pred == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let nij = table[r][c];
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (row_sums[r] as f64 * col_sums[c] as f64)).ln();
            }
        }
    }
    Ok((mi / (h_true * h_pred).sqrt()).clamp(0.0, 1.0))
}

/// ACC and NMI together.
pub fn evaluate(truth: &[usize], pred: &[usize]) -> Result<MetricReport> {
    let (_, c_true, c_pred) = contingency(truth, pred)?;
    Ok(MetricReport {
        acc: clustering_accuracy(truth, pred)?,
        nmi: nmi(truth, pred)?,
        n: truth.len(),
        c_true,
        c_pred,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub dof: f64,
    /// Two-sided p-value.
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance two-sample t-test with Satterthwaite degrees of
/// freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "t-test needs at least 2 observations per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if !(se2 > 0.0) {
        return Err(Error::InvalidInput("both samples have zero variance".into()));
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p = if t == 0.0 {
        1.0
    } else {
        beta_reg(dof / 2.0, 0.5, dof / (dof + t * t)).clamp(0.0, 1.0)
    };
    Ok(TTest { t, dof, p })
}
