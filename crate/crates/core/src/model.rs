//! Domain types shared by the solver, the self-paced weighting and the driver.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::exec::Execution;

/// A set of related clustering tasks over a common feature space.
///
/// Each task matrix holds one example per column (`d × n_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskProblem {
    tasks: Vec<DMatrix<f64>>,
    d: usize,
    c: usize,
    labels: Option<Vec<Vec<usize>>>,
}

impl MultiTaskProblem {
    pub fn new(tasks: Vec<DMatrix<f64>>, c: usize) -> Result<Self> {
        let Some(first) = tasks.first() else {
            return Err(Error::InvalidInput("a problem needs at least one task".into()));
        };
        let d = first.nrows();
        if d == 0 {
            return Err(Error::Dimension("feature dimension must be positive".into()));
        }
        for (k, x) in tasks.iter().enumerate() {
            if x.nrows() != d {
                return Err(Error::Dimension(format!(
                    "task {k} has {} features, task 0 has {d}",
                    x.nrows()
                )));
            }
            if x.ncols() == 0 {
                return Err(Error::EmptyTask(k));
            }
        }
        let min_n = tasks.iter().map(|x| x.ncols()).min().unwrap_or(0);
        if c == 0 || c > min_n {
            return Err(Error::InvalidInput(format!(
                "cluster count {c} must lie in 1..={min_n}"
            )));
        }
        Ok(Self {
            tasks,
            d,
            c,
            labels: None,
        })
    }

    /// Attaches ground-truth labels. Raw values are densified jointly across
    /// tasks: the sorted distinct values map to `0..`.
    pub fn with_labels(mut self, raw: Vec<Vec<i64>>) -> Result<Self> {
        if raw.len() != self.tasks.len() {
            return Err(Error::Dimension(format!(
                "{} label vectors for {} tasks",
                raw.len(),
                self.tasks.len()
            )));
        }
        for (k, (lab, x)) in raw.iter().zip(&self.tasks).enumerate() {
            if lab.len() != x.ncols() {
                return Err(Error::Dimension(format!(
                    "task {k}: {} labels for {} examples",
                    lab.len(),
                    x.ncols()
                )));
            }
        }
        let mut distinct: Vec<i64> = raw.iter().flatten().copied().collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() > self.c {
            return Err(Error::InvalidInput(format!(
                "labels use {} distinct values but c = {}",
                distinct.len(),
                self.c
            )));
        }
        let dense = raw
            .iter()
            .map(|lab| {
                lab.iter()
                    .map(|v| distinct.binary_search(v).expect("value collected above"))
                    .collect()
            })
            .collect();
        self.labels = Some(dense);
        Ok(self)
    }

    pub fn tasks(&self) -> &[DMatrix<f64>] {
        &self.tasks
    }

    pub fn task(&self, k: usize) -> &DMatrix<f64> {
        &self.tasks[k]
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn m(&self) -> usize {
        self.tasks.len()
    }

    pub fn n(&self, k: usize) -> usize {
        self.tasks[k].ncols()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.tasks.iter().map(|x| x.ncols()).collect()
    }

    pub fn total_examples(&self) -> usize {
        self.tasks.iter().map(|x| x.ncols()).sum()
    }

    pub fn labels(&self) -> Option<&[Vec<usize>]> {
        self.labels.as_deref()
    }
}

/// Parameters of the shared-subspace clustering model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    /// Orthonormal projection, `d × l`.
    pub w: DMatrix<f64>,
    /// Shared centers in the subspace, `l × c`.
    pub m: DMatrix<f64>,
    /// Per-task centers in feature space, each `d × c`.
    pub m_task: Vec<DMatrix<f64>>,
    /// Relaxed partitions, each `n_k × c` and entrywise nonnegative.
    pub p: Vec<DMatrix<f64>>,
}

impl ModelState {
    pub fn l(&self) -> usize {
        self.w.ncols()
    }

    /// `‖WᵀW − I‖_∞`.
    pub fn orthonormality_error(&self) -> f64 {
        let l = self.w.ncols();
        (self.w.transpose() * &self.w - DMatrix::<f64>::identity(l, l)).amax()
    }

    /// Checks every dimension against `problem`.
    pub fn check_dims(&self, problem: &MultiTaskProblem) -> Result<()> {
        let (d, c, m) = (problem.d(), problem.c(), problem.m());
        let l = self.w.ncols();
        if self.w.nrows() != d || l == 0 || l > d {
            return Err(Error::Dimension(format!(
                "W is {}x{}, expected {d}xl with 1 <= l <= {d}",
                self.w.nrows(),
                l
            )));
        }
        if self.m.shape() != (l, c) {
            return Err(Error::Dimension(format!(
                "M is {:?}, expected ({l}, {c})",
                self.m.shape()
            )));
        }
        if self.m_task.len() != m || self.p.len() != m {
            return Err(Error::Dimension(format!(
                "state holds {} task centers and {} partitions for {m} tasks",
                self.m_task.len(),
                self.p.len()
            )));
        }
        for k in 0..m {
            if self.m_task[k].shape() != (d, c) {
                return Err(Error::Dimension(format!(
                    "M^({k}) is {:?}, expected ({d}, {c})",
                    self.m_task[k].shape()
                )));
            }
            if self.p[k].shape() != (problem.n(k), c) {
                return Err(Error::Dimension(format!(
                    "P^({k}) is {:?}, expected ({}, {c})",
                    self.p[k].shape(),
                    problem.n(k)
                )));
            }
        }
        Ok(())
    }
}

/// How example weights are computed from losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightMode {
    /// Binary selection by loss threshold.
    Hard,
    /// Mixture weighting: saturated, graded, or rejected by loss.
    Soft,
    /// All weights fixed at one (plain shared-subspace clustering).
    None,
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightMode::Hard => "hard",
            WeightMode::Soft => "soft",
            WeightMode::None => "none",
        })
    }
}

impl FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hard" => Ok(WeightMode::Hard),
            "soft" => Ok(WeightMode::Soft),
            "none" => Ok(WeightMode::None),
            other => Err(Error::InvalidConfig(format!("unknown weighting mode `{other}`"))),
        }
    }
}

/// Per-task example weights plus the pace parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    pub v: Vec<Vec<f64>>,
    pub lambda2: Vec<f64>,
    /// Only meaningful in soft mode, where it equals `lambda2 / 2`.
    pub gamma: Vec<f64>,
    pub mode: WeightMode,
}

impl WeightState {
    /// Unit weights for every example of `problem`.
    pub fn unit(problem: &MultiTaskProblem) -> Self {
        let m = problem.m();
        Self {
            v: problem.sizes().into_iter().map(|n| vec![1.0; n]).collect(),
            lambda2: vec![f64::INFINITY; m],
            gamma: vec![0.0; m],
            mode: WeightMode::None,
        }
    }

    /// Fraction of examples with positive weight, per task.
    pub fn selected_fraction(&self) -> Vec<f64> {
        self.v
            .iter()
            .map(|v| v.iter().filter(|&&x| x > 0.0).count() as f64 / v.len().max(1) as f64)
            .collect()
    }

    pub fn check_dims(&self, problem: &MultiTaskProblem) -> Result<()> {
        if self.v.len() != problem.m() {
            return Err(Error::Dimension(format!(
                "{} weight vectors for {} tasks",
                self.v.len(),
                problem.m()
            )));
        }
        for (k, v) in self.v.iter().enumerate() {
            if v.len() != problem.n(k) {
                return Err(Error::Dimension(format!(
                    "task {k}: {} weights for {} examples",
                    v.len(),
                    problem.n(k)
                )));
            }
        }
        Ok(())
    }
}

/// Starting partitions for the subspace solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartitionInit {
    /// Independent uniform draws in (0, 1).
    Random,
    /// One-hot per-task k-means labels plus a constant floor, so every entry
    /// stays strictly positive.
    KMeans,
}

impl fmt::Display for PartitionInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartitionInit::Random => "random",
            PartitionInit::KMeans => "kmeans",
        })
    }
}

impl FromStr for PartitionInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(PartitionInit::Random),
            "kmeans" => Ok(PartitionInit::KMeans),
            other => Err(Error::InvalidConfig(format!("unknown partition init `{other}`"))),
        }
    }
}

/// Solver and schedule settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Balance between within-task and cross-task reconstruction.
    pub lambda1: f64,
    /// Shared subspace dimension.
    pub l: usize,
    /// Cap on inner sweeps per outer round.
    pub inner_max_iters: usize,
    pub inner_rel_tol: f64,
    /// Unit-weight sweeps run before the first weighting step.
    pub warm_start_iters: usize,
    pub pace_start_fraction: f64,
    pub pace_step_fraction: f64,
    pub ridge_eps: f64,
    pub seed: u64,
    pub mode: WeightMode,
    pub init: PartitionInit,
    pub execution: Execution,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.5,
            l: 2,
            inner_max_iters: 50,
            inner_rel_tol: 1e-6,
            warm_start_iters: 20,
            pace_start_fraction: 0.5,
            pace_step_fraction: 0.1,
            ridge_eps: 1e-8,
            seed: 0,
            mode: WeightMode::Soft,
            init: PartitionInit::KMeans,
            execution: Execution::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.lambda1) {
            return bad(format!("lambda1 = {} outside [0, 1]", self.lambda1));
        }
        if self.l == 0 || self.l > d {
            return bad(format!("l = {} must lie in 1..={d}", self.l));
        }
        if self.inner_max_iters == 0 {
            return bad("inner_max_iters must be positive".into());
        }
        if self.warm_start_iters == 0 {
            return bad("warm_start_iters must be positive".into());
        }
        if !(self.inner_rel_tol > 0.0) {
            return bad(format!("inner_rel_tol = {} must be positive", self.inner_rel_tol));
        }
        for (name, v) in [
            ("pace_start_fraction", self.pace_start_fraction),
            ("pace_step_fraction", self.pace_step_fraction),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} = {v} outside (0, 1]"));
            }
        }
        if !(self.ridge_eps > 0.0) {
            return bad(format!("ridge_eps = {} must be positive", self.ridge_eps));
        }
        Ok(())
    }
}

/// One objective evaluation, taken after a full inner sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// 0 is the warm start; weighting rounds count from 1.
    pub outer_round: usize,
    /// 1-based sweep index within the round.
    pub inner_iter: usize,
    pub within: f64,
    pub cross: f64,
    /// Weighted reconstruction `λ1·within + (1−λ1)·cross`.
    pub total: f64,
    /// Self-paced regularizer value for the round's weights.
    pub regularizer: f64,
    pub selected_fraction: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectiveTrace {
    pub records: Vec<TraceRecord>,
}

impl ObjectiveTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter()
    }

    pub fn extend_with_round(&mut self, other: ObjectiveTrace, outer_round: usize) {
        self.records.extend(other.records.into_iter().map(|mut r| {
            r.outer_round = outer_round;
            r
        }));
    }

    /// Largest increase of `total` between consecutive sweeps of the same
    /// round (0 when the trace is monotone).
    pub fn max_within_round_increase(&self) -> f64 {
        self.records
            .windows(2)
            .filter(|w| w[0].outer_round == w[1].outer_round)
            .map(|w| w[1].total - w[0].total)
            .fold(0.0, f64::max)
    }
}
