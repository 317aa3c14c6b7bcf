//! Lloyd's k-means, used for the single-task and pooled baselines.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    /// `d × c`, one center per column.
    pub centers: DMatrix<f64>,
    pub inertia: f64,
    /// Inertia after every assignment step, then the final value.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(x: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, j: usize) -> f64 {
    x.column(i)
        .iter()
        .zip(centers.column(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Nearest center per column (lowest index on ties) and the resulting inertia.
fn assign(x: &DMatrix<f64>, centers: &DMatrix<f64>) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let labels = (0..x.ncols())
        .map(|i| {
            let mut best = 0;
            let mut best_d = sq_dist(x, i, centers, 0);
            for j in 1..centers.ncols() {
                let dj = sq_dist(x, i, centers, j);
                if dj < best_d {
                    best = j;
                    best_d = dj;
                }
            }
            inertia += best_d;
            best
        })
        .collect();
    (labels, inertia)
}

/// Sum of squared distances from each column to its assigned center.
pub fn inertia(x: &DMatrix<f64>, assignments: &[usize], centers: &DMatrix<f64>) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &j)| sq_dist(x, i, centers, j))
        .sum()
}

fn recompute_centers(x: &DMatrix<f64>, labels: &[usize], old: &DMatrix<f64>) -> DMatrix<f64> {
    let c = old.ncols();
    let mut centers = DMatrix::zeros(x.nrows(), c);
    let mut counts = vec![0usize; c];
    for (i, &j) in labels.iter().enumerate() {
        let mut col = centers.column_mut(j);
        col += x.column(i);
        counts[j] += 1;
    }
    let mut empty = Vec::new();
    for j in 0..c {
        if counts[j] > 0 {
            centers.column_mut(j).unscale_mut(counts[j] as f64);
        } else {
            empty.push(j);
        }
    }
    // An empty cluster takes over the point farthest from its own center.
    let mut taken = Vec::new();
    for j in empty {
        let far = (0..x.ncols())
            .filter(|i| !taken.contains(i))
            .max_by(|&a, &b| sq_dist(x, a, &centers, labels[a]).total_cmp(&sq_dist(x, b, &centers, labels[b])));
        if let Some(i) = far {
            centers.set_column(j, &x.column(i));
            taken.push(i);
        }
    }
    centers
}

/// k-means++ seeding: the first center is a uniform random example, each
/// further one is drawn with probability proportional to its squared distance
/// from the nearest center chosen so far. Falls back to a uniform unused
/// example once every point coincides with a center.
fn seed_examples(x: &DMatrix<f64>, c: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = x.ncols();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|i| col_dist(x, i, chosen[0])).collect();
    while chosen.len() < c {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = nearest.iter().rposition(|&w| w > 0.0).expect("total > 0");
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, w) in nearest.iter_mut().enumerate() {
            *w = w.min(col_dist(x, i, next));
        }
    }
    chosen
}

fn col_dist(x: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    (x.column(a) - x.column(b)).norm_squared()
}

/// Lloyd iterations from k-means++ seeded examples.
pub fn kmeans_fit(x: &DMatrix<f64>, c: usize, seed: u64, max_iters: usize) -> Result<KMeansFit> {
    let n = x.ncols();
    if c == 0 || n < c {
        return Err(Error::InvalidInput(format!(
            "k-means needs 1 <= c <= n, got c = {c}, n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = seed_examples(x, c, &mut rng);
    let mut centers = DMatrix::from_fn(x.nrows(), c, |r, j| x[(r, init[j])]);

    let (mut labels, first) = assign(x, &centers);
    let mut trace = vec![first];
    for _ in 0..max_iters {
        centers = recompute_centers(x, &labels, &centers);
        let (next, next_inertia) = assign(x, &centers);
        trace.push(next_inertia);
        let changed = next != labels;
        labels = next;
        if !changed {
            break;
        }
    }
    let centers = recompute_centers(x, &labels, &centers);
    let final_inertia = inertia(x, &labels, &centers);
    trace.push(final_inertia);
    Ok(KMeansFit {
        assignments: labels,
        centers,
        inertia: final_inertia,
        inertia_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_far_pairs() {
        let x = DMatrix::from_column_slice(2, 4, &[0.0, 0.0, 0.0, 1.0, 100.0, 0.0, 100.0, 1.0]);
        for seed in 0..10 {
            let fit = kmeans_fit(&x, 2, seed, 50).unwrap();
            assert_eq!(fit.assignments[0], fit.assignments[1]);
            assert_eq!(fit.assignments[2], fit.assignments[3]);
            assert_ne!(fit.assignments[0], fit.assignments[2]);
            // each pair contributes 2 · 0.5²
            assert!((fit.inertia - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_cluster_per_point() {
        let x = DMatrix::from_column_slice(1, 3, &[1.0, 5.0, -2.0]);
        let fit = kmeans_fit(&x, 3, 1, 10).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let mut a = fit.assignments.clone();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2]);
    }

    #[test]
    fn inertia_trace_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(3, 60, |_, _| rng.random_range(-1.0..1.0));
        for seed in 0..5 {
            let fit = kmeans_fit(&x, 4, seed, 100).unwrap();
            for w in fit.inertia_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn too_few_points() {
        let x = DMatrix::<f64>::zeros(2, 2);
        assert!(matches!(kmeans_fit(&x, 3, 0, 10), Err(Error::InvalidInput(_))));
    }
}
