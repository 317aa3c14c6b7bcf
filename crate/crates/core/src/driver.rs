//! The self-paced outer loop, final assignment, and the k-means baselines.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kmeans::{kmeans_fit, KMeansFit};
use crate::model::{
    FitConfig, ModelState, MultiTaskProblem, ObjectiveTrace, PartitionInit, TraceRecord, WeightMode, WeightState,
};
use crate::self_paced::{advance_pace, compute_weights, PaceSchedule};
use crate::updates::{example_losses, fixed_sweeps, inner_fit};

/// Lloyd iteration cap used by the k-means baselines.
pub const KMEANS_MAX_ITERS: usize = 300;

/// Every clustering method the toolkit can run and compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// k-means on each task separately.
    Km,
    /// k-means on the pooled examples of all tasks.
    AllKm,
    /// Shared-subspace multi-task clustering with unit weights.
    Lssmtc,
    /// Self-paced multi-task clustering, hard weights.
    SpmtcHard,
    /// Self-paced multi-task clustering, soft weights.
    SpmtcSoft,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Km,
        Method::AllKm,
        Method::Lssmtc,
        Method::SpmtcHard,
        Method::SpmtcSoft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Km => "km",
            Method::AllKm => "all-km",
            Method::Lssmtc => "lssmtc",
            Method::SpmtcHard => "spmtc-h",
            Method::SpmtcSoft => "spmtc-s",
        }
    }

    /// Weighting mode for the subspace methods.
    pub fn mode(self) -> Option<WeightMode> {
        match self {
            Method::Km | Method::AllKm => None,
            Method::Lssmtc => Some(WeightMode::None),
            Method::SpmtcHard => Some(WeightMode::Hard),
            Method::SpmtcSoft => Some(WeightMode::Soft),
        }
    }

    /// Whether λ1 and l affect the result.
    pub fn uses_grid(self) -> bool {
        self.mode().is_some()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub method: Method,
    /// Cluster index per example, per task.
    pub assignments: Vec<Vec<usize>>,
    /// Final model; absent for the k-means baselines.
    pub state: Option<ModelState>,
    pub trace: ObjectiveTrace,
    pub weights: WeightState,
    /// Weights used in each weighting round, in order.
    pub weight_history: Vec<WeightState>,
    pub config: FitConfig,
    pub seed: u64,
    pub wall_time: Duration,
}

impl RunResult {
    /// Objective value of the last trace record.
    pub fn final_objective(&self) -> f64 {
        self.trace.records.last().map(|r| r.total).unwrap_or(f64::NAN)
    }
}

/// Row-wise argmax of a nonnegative partition; ties go to the lowest column.
pub fn assign_clusters(p: &DMatrix<f64>) -> Result<Vec<usize>> {
    if p.nrows() == 0 || p.ncols() == 0 {
        return Err(Error::Dimension("cannot assign clusters from an empty matrix".into()));
    }
    Ok(p.row_iter()
        .map(|row| {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// Floor added to the one-hot k-means partitions.
pub const KMEANS_INIT_FLOOR: f64 = 0.2;

/// Seeded starting point. `W` is the first `l` identity columns and the
/// centers are zero (both are replaced by the first sweep); `P^(k)` follows
/// `init`. The k-means start seeds task `k` with `seed + k`.
pub fn initial_state(problem: &MultiTaskProblem, l: usize, seed: u64, init: PartitionInit) -> Result<ModelState> {
    let (d, c) = (problem.d(), problem.c());
    if l == 0 || l > d {
        return Err(Error::InvalidConfig(format!("l = {l} must lie in 1..={d}")));
    }
    let p = match init {
        PartitionInit::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            problem
                .sizes()
                .into_iter()
                .map(|n| DMatrix::from_fn(n, c, |_, _| rng.sample::<f64, _>(Open01)))
                .collect()
        }
        PartitionInit::KMeans => problem
            .tasks()
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let fit = kmeans_fit(x, c, seed.wrapping_add(k as u64), KMEANS_MAX_ITERS)?;
                Ok(DMatrix::from_fn(x.ncols(), c, |i, j| {
                    if fit.assignments[i] == j {
                        1.0 + KMEANS_INIT_FLOOR
                    } else {
                        KMEANS_INIT_FLOOR
                    }
                }))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(ModelState {
        w: DMatrix::identity(d, l),
        m: DMatrix::zeros(l, c),
        m_task: vec![DMatrix::zeros(d, c); problem.m()],
        p,
    })
}

fn assignments_of(state: &ModelState) -> Result<Vec<Vec<usize>>> {
    state.p.iter().map(assign_clusters).collect()
}

/// Fits the weighted shared-subspace model with self-paced example selection.
///
/// With `mode = none` this is a single unit-weight inner fit from the seeded
/// starting point. Otherwise a fixed-length unit-weight warm start is followed
/// by weighting rounds at fractions `start, start + step, …, 1`, each running a
/// full inner fit; the round at fraction 1 is the last.
pub fn spmtc_fit(problem: &MultiTaskProblem, config: &FitConfig) -> Result<RunResult> {
    config.validate(problem.d())?;
    let started = Instant::now();
    let init = initial_state(problem, config.l, config.seed, config.init)?;
    let unit = WeightState::unit(problem);
    let mut trace = ObjectiveTrace::default();
    let mut history = Vec::new();

    let (state, weights) = match config.mode {
        WeightMode::None => {
            let report = inner_fit(problem, &init, &unit, config)?;
            trace.extend_with_round(report.trace, 1);
            history.push(unit.clone());
            (report.state, unit)
        }
        mode => {
            let warm = fixed_sweeps(problem, &init, &unit, config, config.warm_start_iters)?;
            trace.extend_with_round(warm.trace, 0);
            let mut state = warm.state;

            let mut schedule = PaceSchedule::new(problem.m(), config.pace_start_fraction, config.pace_step_fraction);
            let mut losses = example_losses(problem, &state, config.lambda1)?;
            let mut lambda2 = schedule.thresholds(&losses)?;
            let mut round = 1;
            loop {
                let weights = compute_weights(mode, &losses, &lambda2)?;
                let report = inner_fit(problem, &state, &weights, config)?;
                trace.extend_with_round(report.trace, round);
                state = report.state;
                history.push(weights.clone());
                if schedule.is_complete() {
                    break (state, weights);
                }
                losses = example_losses(problem, &state, config.lambda1)?;
                (schedule, lambda2) = advance_pace(&schedule, &losses)?;
                round += 1;
            }
        }
    };

    Ok(RunResult {
        method: match config.mode {
            WeightMode::None => Method::Lssmtc,
            WeightMode::Hard => Method::SpmtcHard,
            WeightMode::Soft => Method::SpmtcSoft,
        },
        assignments: assignments_of(&state)?,
        state: Some(state),
        trace,
        weights,
        weight_history: history,
        config: config.clone(),
        seed: config.seed,
        wall_time: started.elapsed(),
    })
}

fn kmeans_trace(fits: &[KMeansFit]) -> ObjectiveTrace {
    let len = fits.iter().map(|f| f.inertia_trace.len()).max().unwrap_or(0);
    let records = (0..len)
        .map(|t| {
            let total: f64 = fits
                .iter()
                .map(|f| f.inertia_trace[t.min(f.inertia_trace.len() - 1)])
                .sum();
            TraceRecord {
                outer_round: 0,
                inner_iter: t + 1,
                within: total,
                cross: 0.0,
                total,
                regularizer: 0.0,
                selected_fraction: vec![1.0; fits.len()],
            }
        })
        .collect();
    ObjectiveTrace { records }
}

fn baseline_result(
    problem: &MultiTaskProblem,
    method: Method,
    assignments: Vec<Vec<usize>>,
    fits: &[KMeansFit],
    seed: u64,
    started: Instant,
) -> RunResult {
    let mut trace = kmeans_trace(fits);
    for r in &mut trace.records {
        r.selected_fraction = vec![1.0; problem.m()];
    }
    RunResult {
        method,
        assignments,
        state: None,
        trace,
        weights: WeightState::unit(problem),
        weight_history: Vec::new(),
        config: FitConfig {
            seed,
            mode: WeightMode::None,
            ..FitConfig::default()
        },
        seed,
        wall_time: started.elapsed(),
    }
}

/// Independent k-means on every task. Task `k` is seeded with `seed + k`.
pub fn per_task_kmeans(problem: &MultiTaskProblem, seed: u64) -> Result<RunResult> {
    let started = Instant::now();
    let fits = problem
        .tasks()
        .iter()
        .enumerate()
        .map(|(k, x)| kmeans_fit(x, problem.c(), seed.wrapping_add(k as u64), KMEANS_MAX_ITERS))
        .collect::<Result<Vec<_>>>()?;
    let assignments = fits.iter().map(|f| f.assignments.clone()).collect();
    Ok(baseline_result(problem, Method::Km, assignments, &fits, seed, started))
}

/// Horizontal concatenation of all task matrices.
pub fn pooled_matrix(problem: &MultiTaskProblem) -> DMatrix<f64> {
    let n = problem.total_examples();
    let mut out = DMatrix::zeros(problem.d(), n);
    let mut offset = 0;
    for x in problem.tasks() {
        out.columns_mut(offset, x.ncols()).copy_from(x);
        offset += x.ncols();
    }
    out
}

/// Clusters the pooled examples of all tasks once and splits the labels back.
pub fn pooled_baseline(problem: &MultiTaskProblem, method: Method, seed: u64) -> Result<RunResult> {
    if method != Method::AllKm {
        return Err(Error::InvalidConfig(format!(
            "pooled baseline supports `all-km` only, got `{method}`"
        )));
    }
    let started = Instant::now();
    let pooled = pooled_matrix(problem);
    let fit = kmeans_fit(&pooled, problem.c(), seed, KMEANS_MAX_ITERS)?;
    let mut assignments = Vec::with_capacity(problem.m());
    let mut offset = 0;
    for n in problem.sizes() {
        assignments.push(fit.assignments[offset..offset + n].to_vec());
        offset += n;
    }
    Ok(baseline_result(
        problem,
        Method::AllKm,
        assignments,
        std::slice::from_ref(&fit),
        seed,
        started,
    ))
}

/// Runs `method` with the given configuration (λ1, l, mode are taken from the
/// method where relevant).
pub fn run_method(problem: &MultiTaskProblem, method: Method, config: &FitConfig) -> Result<RunResult> {
    match method {
        Method::Km => per_task_kmeans(problem, config.seed),
        Method::AllKm => pooled_baseline(problem, method, config.seed),
        m => {
            let cfg = FitConfig {
                mode: m.mode().expect("subspace method"),
                ..config.clone()
            };
            spmtc_fit(problem, &cfg)
        }
    }
}
