//! Weighted shared-subspace objective and its alternating updates.
//!
//! With example weights `v^(k)` the model minimizes
//!
//! ```text
//! λ1 Σ_k ‖(X^(k) − M^(k) P^(k)ᵀ) V^(k)‖²_F + (1−λ1) Σ_k ‖(Wᵀ X^(k) − M P^(k)ᵀ) V^(k)‖²_F
//! ```
//!
//! with `V^(k) = diag(v^(k))`, `WᵀW = I` and `P^(k) ≥ 0`. Column `i` of a
//! task therefore enters with factor `v_i²`. The stacked block-diagonal `V`
//! is never formed; each task's columns are scaled in place.
//!
//! With unit weights a sweep is one iteration of plain shared-subspace
//! multi-task clustering.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{eigh_ascending, solve_regularized};
use crate::model::{FitConfig, ModelState, MultiTaskProblem, ObjectiveTrace, TraceRecord, WeightState};
use crate::self_paced::total_regularizer;

/// Guard added to the denominator of the multiplicative partition update.
pub const MULTIPLICATIVE_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts {
    pub within: f64,
    pub cross: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct InnerFitReport {
    pub state: ModelState,
    pub trace: ObjectiveTrace,
    pub iterations_used: usize,
    pub converged: bool,
}

fn check_weights(problem: &MultiTaskProblem, v: &[Vec<f64>]) -> Result<()> {
    if v.len() != problem.m() {
        return Err(Error::Dimension(format!(
            "{} weight vectors for {} tasks",
            v.len(),
            problem.m()
        )));
    }
    for (k, w) in v.iter().enumerate() {
        if w.len() != problem.n(k) {
            return Err(Error::Dimension(format!(
                "task {k}: {} weights for {} examples",
                w.len(),
                problem.n(k)
            )));
        }
    }
    Ok(())
}

fn check_lambda1(lambda1: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda1) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("lambda1 = {lambda1} outside [0, 1]")))
    }
}

/// `X · diag(s)`.
fn scale_columns(x: &DMatrix<f64>, s: impl Iterator<Item = f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (mut col, f) in out.column_iter_mut().zip(s) {
        col *= f;
    }
    out
}

fn squares(v: &[f64]) -> impl Iterator<Item = f64> + '_ {
    v.iter().map(|x| x * x)
}

fn column_sq_norms(r: &DMatrix<f64>) -> Vec<f64> {
    r.column_iter().map(|c| c.norm_squared()).collect()
}

fn within_residual(problem: &MultiTaskProblem, state: &ModelState, k: usize) -> DMatrix<f64> {
    problem.task(k) - &state.m_task[k] * state.p[k].transpose()
}

fn cross_residual(problem: &MultiTaskProblem, state: &ModelState, k: usize) -> DMatrix<f64> {
    state.w.transpose() * problem.task(k) - &state.m * state.p[k].transpose()
}

/// Weighted within-task and cross-task reconstruction errors and their
/// `λ1`-blend.
pub fn objective(
    problem: &MultiTaskProblem,
    state: &ModelState,
    v: &[Vec<f64>],
    lambda1: f64,
) -> Result<ObjectiveParts> {
    check_lambda1(lambda1)?;
    state.check_dims(problem)?;
    check_weights(problem, v)?;
    let mut within = 0.0;
    let mut cross = 0.0;
    for (k, vk) in v.iter().enumerate() {
        let rw = column_sq_norms(&within_residual(problem, state, k));
        let rc = column_sq_norms(&cross_residual(problem, state, k));
        for i in 0..vk.len() {
            let s = vk[i] * vk[i];
            within += s * rw[i];
            cross += s * rc[i];
        }
    }
    Ok(ObjectiveParts {
        within,
        cross,
        total: lambda1 * within + (1.0 - lambda1) * cross,
    })
}

/// Per-example reconstruction loss
/// `λ1‖x_i − M^(k)p_i‖² + (1−λ1)‖Wᵀx_i − M p_i‖²`, for every task.
pub fn example_losses(problem: &MultiTaskProblem, state: &ModelState, lambda1: f64) -> Result<Vec<Vec<f64>>> {
    check_lambda1(lambda1)?;
    state.check_dims(problem)?;
    Ok((0..problem.m())
        .map(|k| {
            let rw = column_sq_norms(&within_residual(problem, state, k));
            let rc = column_sq_norms(&cross_residual(problem, state, k));
            rw.iter()
                .zip(&rc)
                .map(|(w, c)| lambda1 * w + (1.0 - lambda1) * c)
                .collect()
        })
        .collect())
}

fn any_positive(v: &[f64]) -> bool {
    v.iter().any(|&x| x > 0.0)
}

/// Stacked `Σ_k X^(k) V² P^(k)` (`d × c`) and `Σ_k P^(k)ᵀ V² P^(k)` (`c × c`).
fn stacked_moments(problem: &MultiTaskProblem, p: &[DMatrix<f64>], v: &[Vec<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let (d, c) = (problem.d(), problem.c());
    let mut xvp = DMatrix::zeros(d, c);
    let mut pvp = DMatrix::zeros(c, c);
    for k in 0..problem.m() {
        let vp = scale_rows(&p[k], squares(&v[k]));
        xvp += problem.task(k) * &vp;
        pvp += p[k].transpose() * &vp;
    }
    (xvp, pvp)
}

/// `diag(s) · P`.
fn scale_rows(p: &DMatrix<f64>, s: impl Iterator<Item = f64>) -> DMatrix<f64> {
    let mut out = p.clone();
    for (i, f) in s.enumerate() {
        out.row_mut(i).scale_mut(f);
    }
    out
}

/// Shared centers: `Wᵀ X V Vᵀ P (Pᵀ V Vᵀ P + εI)⁻¹` over the stacked tasks.
pub fn update_m(problem: &MultiTaskProblem, state: &ModelState, v: &[Vec<f64>], eps: f64) -> Result<DMatrix<f64>> {
    state.check_dims(problem)?;
    check_weights(problem, v)?;
    if !v.iter().any(|w| any_positive(w)) {
        return Err(Error::DegenerateWeights);
    }
    let (xvp, pvp) = stacked_moments(problem, &state.p, v);
    solve_regularized(&pvp, &(state.w.transpose() * xvp), eps)
}

/// Centers of task `k`: `X V Vᵀ P (Pᵀ V Vᵀ P + εI)⁻¹`.
pub fn update_m_task(
    problem: &MultiTaskProblem,
    state: &ModelState,
    v: &[Vec<f64>],
    k: usize,
    eps: f64,
) -> Result<DMatrix<f64>> {
    state.check_dims(problem)?;
    check_weights(problem, v)?;
    if k >= problem.m() {
        return Err(Error::Dimension(format!("task index {k} out of range")));
    }
    if !any_positive(&v[k]) {
        return Err(Error::DegenerateWeights);
    }
    let vp = scale_rows(&state.p[k], squares(&v[k]));
    let xvp = problem.task(k) * &vp;
    let pvp = state.p[k].transpose() * vp;
    solve_regularized(&pvp, &xvp, eps)
}

/// Multiplicative update of `P^(k)`:
///
/// ```text
/// P_ij ← P_ij · sqrt([A⁺ + V Vᵀ P B⁻]_ij / [A⁻ + V Vᵀ P B⁺]_ij)
/// A = λ1 V Vᵀ Xᵀ M^(k) + (1−λ1) V Vᵀ Xᵀ W M
/// B = λ1 M^(k)ᵀ M^(k) + (1−λ1) Mᵀ M
/// ```
///
/// Row `i` of both bracketed terms carries the common factor `v_i²`, which is
/// divided out before applying the denominator guard. Rows with `v_i = 0` do
/// not enter the objective and are returned unchanged.
pub fn update_p_task(
    problem: &MultiTaskProblem,
    state: &ModelState,
    v: &[Vec<f64>],
    k: usize,
    lambda1: f64,
) -> Result<DMatrix<f64>> {
    check_lambda1(lambda1)?;
    state.check_dims(problem)?;
    check_weights(problem, v)?;
    if k >= problem.m() {
        return Err(Error::Dimension(format!("task index {k} out of range")));
    }
    let p = &state.p[k];
    if let Some(bad) = p.iter().find(|&&x| !(x >= 0.0)) {
        return Err(Error::InvariantViolation(format!(
            "P^({k}) holds a negative or non-finite entry {bad}"
        )));
    }
    let x = problem.task(k);
    let a = (x.transpose() * &state.m_task[k]) * lambda1 + (x.transpose() * &state.w * &state.m) * (1.0 - lambda1);
    let b =
        (state.m_task[k].transpose() * &state.m_task[k]) * lambda1 + (state.m.transpose() * &state.m) * (1.0 - lambda1);
    let b_pos = b.map(|x| (x.abs() + x) / 2.0);
    let b_neg = b.map(|x| (x.abs() - x) / 2.0);
    let pb_pos = p * b_pos;
    let pb_neg = p * b_neg;

    let mut out = p.clone();
    for i in 0..p.nrows() {
        if v[k][i] <= 0.0 {
            continue;
        }
        for j in 0..p.ncols() {
            let aij = a[(i, j)];
            let num = (aij.abs() + aij) / 2.0 + pb_neg[(i, j)];
            let den = (aij.abs() - aij) / 2.0 + pb_pos[(i, j)] + MULTIPLICATIVE_GUARD;
            out[(i, j)] = p[(i, j)] * (num / den).sqrt();
        }
    }
    Ok(out)
}

/// The matrix whose bottom eigenvectors give the projection:
/// `X V (I − Vᵀ P (Pᵀ V Vᵀ P + εI)⁻¹ Pᵀ V) Vᵀ Xᵀ`.
pub fn projection_matrix(
    problem: &MultiTaskProblem,
    p: &[DMatrix<f64>],
    v: &[Vec<f64>],
    eps: f64,
) -> Result<DMatrix<f64>> {
    let d = problem.d();
    let mut xvx = DMatrix::zeros(d, d);
    for k in 0..problem.m() {
        let xv = scale_columns(problem.task(k), squares(&v[k]));
        xvx += xv * problem.task(k).transpose();
    }
    let (xvp, pvp) = stacked_moments(problem, p, v);
    let y = solve_regularized(&pvp, &xvp, eps)?;
    let s = xvx - y * xvp.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// Projection: eigenvectors of [`projection_matrix`] for its `l` smallest
/// eigenvalues.
pub fn update_w(problem: &MultiTaskProblem, state: &ModelState, v: &[Vec<f64>], eps: f64) -> Result<DMatrix<f64>> {
    state.check_dims(problem)?;
    check_weights(problem, v)?;
    if !v.iter().any(|w| any_positive(w)) {
        return Err(Error::DegenerateWeights);
    }
    let s = projection_matrix(problem, &state.p, v, eps)?;
    let (_, w) = eigh_ascending(&s, state.l())?;
    Ok(w)
}

/// One full sweep in the order M, M^(k), P^(k), W. The shared centers are
/// refreshed after the projection so the sweep ends on the joint (W, M)
/// optimum; the next sweep's M update is then a no-op.
///
/// Tasks without any selected example keep their centers and partition.
pub fn sweep(problem: &MultiTaskProblem, state: &ModelState, v: &[Vec<f64>], config: &FitConfig) -> Result<ModelState> {
    let eps = config.ridge_eps;
    let exec = config.execution;
    let mut next = state.clone();
    next.m = update_m(problem, &next, v, eps)?;

    let m_task = exec.try_map(problem.m(), |k| {
        if any_positive(&v[k]) {
            update_m_task(problem, &next, v, k, eps)
        } else {
            Ok(next.m_task[k].clone())
        }
    })?;
    next.m_task = m_task;

    let p = exec.try_map(problem.m(), |k| {
        if any_positive(&v[k]) {
            update_p_task(problem, &next, v, k, config.lambda1)
        } else {
            Ok(next.p[k].clone())
        }
    })?;
    next.p = p;

    next.w = update_w(problem, &next, v, eps)?;
    next.m = update_m(problem, &next, v, eps)?;
    Ok(next)
}

fn run_sweeps(
    problem: &MultiTaskProblem,
    state: &ModelState,
    weights: &WeightState,
    config: &FitConfig,
    max_iters: usize,
    rel_tol: Option<f64>,
) -> Result<InnerFitReport> {
    check_lambda1(config.lambda1)?;
    state.check_dims(problem)?;
    weights.check_dims(problem)?;
    if !weights.v.iter().any(|w| any_positive(w)) {
        return Err(Error::DegenerateWeights);
    }
    let regularizer = total_regularizer(weights);
    let fractions = weights.selected_fraction();
    let mut prev = objective(problem, state, &weights.v, config.lambda1)?.total;
    let mut current = state.clone();
    let mut trace = ObjectiveTrace::default();
    let mut converged = false;
    let mut used = 0;
    for it in 1..=max_iters {
        current = sweep(problem, &current, &weights.v, config)?;
        used = it;
        let obj = objective(problem, &current, &weights.v, config.lambda1)?;
        trace.records.push(TraceRecord {
            outer_round: 0,
            inner_iter: it,
            within: obj.within,
            cross: obj.cross,
            total: obj.total,
            regularizer,
            selected_fraction: fractions.clone(),
        });
        if let Some(tol) = rel_tol {
            let rel = (prev - obj.total).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if rel < tol {
                converged = true;
                break;
            }
        }
        prev = obj.total;
    }
    Ok(InnerFitReport {
        state: current,
        trace,
        iterations_used: used,
        converged,
    })
}

/// Alternates the four updates with the weights held fixed until the
/// relative change of the total objective drops below `inner_rel_tol` or
/// `inner_max_iters` sweeps have run.
pub fn inner_fit(
    problem: &MultiTaskProblem,
    state: &ModelState,
    weights: &WeightState,
    config: &FitConfig,
) -> Result<InnerFitReport> {
    run_sweeps(
        problem,
        state,
        weights,
        config,
        config.inner_max_iters,
        Some(config.inner_rel_tol),
    )
}

/// Exactly `sweeps` sweeps, no convergence test.
pub fn fixed_sweeps(
    problem: &MultiTaskProblem,
    state: &ModelState,
    weights: &WeightState,
    config: &FitConfig,
    sweeps: usize,
) -> Result<InnerFitReport> {
    run_sweeps(problem, state, weights, config, sweeps, None)
}
