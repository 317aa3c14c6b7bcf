#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spmtc::{ModelState, MultiTaskProblem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

pub fn positive(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(0.05..1.0))
}

pub fn orthonormal(rng: &mut ChaCha8Rng, d: usize, l: usize) -> DMatrix<f64> {
    gaussian(rng, d, l).qr().q()
}

/// A random problem with a random (not fitted) state and random weights in
/// (0, 1]. Sizes: d in 2..=6, n_k in c..=8, c in 1..=3.
pub struct Instance {
    pub problem: MultiTaskProblem,
    pub state: ModelState,
    pub v: Vec<Vec<f64>>,
    pub lambda1: f64,
}

pub fn instance(seed: u64, m: usize) -> Instance {
    let mut r = rng(seed);
    let d = r.random_range(2..=6);
    let c = r.random_range(1..=3);
    let l = r.random_range(1..=d);
    let tasks: Vec<DMatrix<f64>> = (0..m)
        .map(|_| {
            let n = r.random_range(c.max(2)..=8);
            gaussian(&mut r, d, n)
        })
        .collect();
    let problem = MultiTaskProblem::new(tasks, c).unwrap();
    let p = problem.sizes().iter().map(|&n| positive(&mut r, n, c)).collect();
    let state = ModelState {
        w: orthonormal(&mut r, d, l),
        m: gaussian(&mut r, l, c),
        m_task: (0..m).map(|_| gaussian(&mut r, d, c)).collect(),
        p,
    };
    let v = problem
        .sizes()
        .iter()
        .map(|&n| (0..n).map(|_| r.random_range(0.1..=1.0)).collect())
        .collect();
    let lambda1 = r.random_range(0.05..0.95);
    Instance {
        problem,
        state,
        v,
        lambda1,
    }
}

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_gradient(x: &DMatrix<f64>, h: f64, f: impl Fn(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let mut a = x.clone();
            let mut b = x.clone();
            a[(i, j)] += h;
            b[(i, j)] -= h;
            g[(i, j)] = (f(&a) - f(&b)) / (2.0 * h);
        }
    }
    g
}

/// Elementwise double-loop objective, written without matrix products.
pub fn naive_objective(problem: &MultiTaskProblem, s: &ModelState, v: &[Vec<f64>], lambda1: f64) -> (f64, f64, f64) {
    let (d, c, l) = (problem.d(), problem.c(), s.w.ncols());
    let mut within = 0.0;
    let mut cross = 0.0;
    for k in 0..problem.m() {
        let x = problem.task(k);
        for i in 0..x.ncols() {
            let w2 = v[k][i] * v[k][i];
            let mut e = 0.0;
            for r in 0..d {
                let mut rec = 0.0;
                for j in 0..c {
                    rec += s.m_task[k][(r, j)] * s.p[k][(i, j)];
                }
                e += (x[(r, i)] - rec).powi(2);
            }
            within += w2 * e;
            let mut e = 0.0;
            for a in 0..l {
                let mut proj = 0.0;
                for r in 0..d {
                    proj += s.w[(r, a)] * x[(r, i)];
                }
                let mut rec = 0.0;
                for j in 0..c {
                    rec += s.m[(a, j)] * s.p[k][(i, j)];
                }
                e += (proj - rec).powi(2);
            }
            cross += w2 * e;
        }
    }
    (within, cross, lambda1 * within + (1.0 - lambda1) * cross)
}
