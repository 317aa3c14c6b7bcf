//! Closed-form self-paced weights and the per-task pace schedule.
//!
//! Every task gets its own threshold `λ2^(k)`, chosen from that task's losses
//! alone, so a task with uniformly large losses still contributes its easiest
//! examples from the first round on.

use crate::error::{Error, Result};
use crate::model::{WeightMode, WeightState};

/// Added to the selected quantile so that the boundary example satisfies
/// `L ≤ λ2`.
pub const THRESHOLD_NUDGE: f64 = 1e-12;

/// Smallest `λ2` that selects `⌈fraction · n⌉` examples under the hard rule.
/// Ties at the threshold are all selected.
pub fn lambda_for_fraction(losses: &[f64], fraction: f64) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::EmptyTask(0));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!("fraction {fraction} outside (0, 1]")));
    }
    if losses.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::InvalidInput("losses must be finite and nonnegative".into()));
    }
    let n = losses.len();
    let count = selection_count(n, fraction);
    let mut sorted = losses.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[count - 1] + THRESHOLD_NUDGE)
}

/// `⌈fraction · n⌉`, clamped to `1..=n` and robust to the rounding drift of
/// repeatedly added fractions.
pub fn selection_count(n: usize, fraction: f64) -> usize {
    let raw = (fraction * n as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(n)
}

/// `v_i = 1` iff `L_i ≤ λ2`.
pub fn hard_weights(losses: &[f64], lambda2: f64) -> Vec<f64> {
    losses.iter().map(|&l| if l <= lambda2 { 1.0 } else { 0.0 }).collect()
}

/// Mixture weighting: 1 below `γλ2/(γ+λ2)`, 0 from `λ2` on, `γ/L − γ/λ2`
/// in between.
pub fn soft_weights(losses: &[f64], lambda2: f64, gamma: f64) -> Vec<f64> {
    let inner = gamma * lambda2 / (gamma + lambda2);
    losses
        .iter()
        .map(|&l| {
            if l <= inner {
                1.0
            } else if l >= lambda2 {
                0.0
            } else {
                (gamma / l - gamma / lambda2).clamp(0.0, 1.0)
            }
        })
        .collect()
}

/// Value of the self-paced term `f(λ2, v)` for one task.
pub fn regularizer_value(weights: &[f64], lambda2: f64, gamma: f64, mode: WeightMode) -> f64 {
    match mode {
        WeightMode::Hard => lambda2 * weights.iter().sum::<f64>(),
        WeightMode::Soft => weights.iter().map(|&v| gamma * (v + gamma / lambda2).ln()).sum(),
        WeightMode::None => 0.0,
    }
}

/// Sum of [`regularizer_value`] over tasks.
pub fn total_regularizer(weights: &WeightState) -> f64 {
    weights
        .v
        .iter()
        .enumerate()
        .map(|(k, v)| regularizer_value(v, weights.lambda2[k], weights.gamma[k], weights.mode))
        .sum()
}

/// Weights for every task given its losses and threshold.
pub fn compute_weights(mode: WeightMode, losses: &[Vec<f64>], lambda2: &[f64]) -> Result<WeightState> {
    if losses.len() != lambda2.len() {
        return Err(Error::Dimension(format!(
            "{} loss vectors for {} thresholds",
            losses.len(),
            lambda2.len()
        )));
    }
    for (k, &lam) in lambda2.iter().enumerate() {
        if mode != WeightMode::None && !(lam > 0.0) {
            return Err(Error::InvalidInput(format!(
                "task {k}: lambda2 = {lam} must be positive"
            )));
        }
    }
    let gamma: Vec<f64> = match mode {
        WeightMode::Soft => lambda2.iter().map(|l| l / 2.0).collect(),
        _ => vec![0.0; lambda2.len()],
    };
    let v = losses
        .iter()
        .enumerate()
        .map(|(k, l)| match mode {
            WeightMode::Hard => hard_weights(l, lambda2[k]),
            WeightMode::Soft => soft_weights(l, lambda2[k], gamma[k]),
            WeightMode::None => vec![1.0; l.len()],
        })
        .collect();
    Ok(WeightState {
        v,
        lambda2: lambda2.to_vec(),
        gamma,
        mode,
    })
}

/// Fraction of each task's examples scheduled for selection.
#[derive(Debug, Clone, PartialEq)]
pub struct PaceSchedule {
    pub current_fraction: Vec<f64>,
    pub start_fraction: f64,
    pub step_fraction: f64,
}

impl PaceSchedule {
    pub fn new(tasks: usize, start_fraction: f64, step_fraction: f64) -> Self {
        Self {
            current_fraction: vec![snap(start_fraction.min(1.0)); tasks],
            start_fraction,
            step_fraction,
        }
    }

    /// True once every task is scheduled to use all of its examples.
    pub fn is_complete(&self) -> bool {
        self.current_fraction.iter().all(|&f| f >= 1.0)
    }

    /// Per-task thresholds for the current fractions.
    pub fn thresholds(&self, losses: &[Vec<f64>]) -> Result<Vec<f64>> {
        if losses.len() != self.current_fraction.len() {
            return Err(Error::Dimension(format!(
                "{} loss vectors for {} scheduled tasks",
                losses.len(),
                self.current_fraction.len()
            )));
        }
        losses
            .iter()
            .zip(&self.current_fraction)
            .enumerate()
            .map(|(k, (l, &f))| {
                lambda_for_fraction(l, f).map_err(|e| match e {
                    Error::EmptyTask(_) => Error::EmptyTask(k),
                    other => other,
                })
            })
            .collect()
    }
}

fn snap(f: f64) -> f64 {
    if f >= 1.0 - 1e-9 {
        1.0
    } else {
        f
    }
}

/// Moves every task one step along the schedule and recomputes its threshold
/// from the current losses.
pub fn advance_pace(schedule: &PaceSchedule, losses: &[Vec<f64>]) -> Result<(PaceSchedule, Vec<f64>)> {
    let mut next = schedule.clone();
    for f in &mut next.current_fraction {
        *f = snap((*f + schedule.step_fraction).min(1.0));
    }
    let lambda2 = next.thresholds(losses)?;
    Ok((next, lambda2))
}
