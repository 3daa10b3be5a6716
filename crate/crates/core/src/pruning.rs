//! Repeated evaluation of noisy objectives and quantile-based pruning.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Direction, Evaluation};
use crate::objective::{Config, ObjectiveError};

pub const DEFAULT_MIN_HISTORY: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum PrunerError {
    #[error("prune quantile must lie strictly between 0 and 1, got {0}")]
    Quantile(f64),
    #[error("repeat count must be at least 1")]
    Repeats,
}

/// Linear-interpolation quantile of unsorted `values`; `q` in `[0, 1]`.
///
/// Returns `None` for an empty slice.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(quantile_sorted(&sorted, q))
}

pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Prunes candidates whose running mean falls outside the top `q` fraction
/// of historical running means at the same step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantilePruner {
    q: f64,
    min_history: usize,
    per_step_values: BTreeMap<usize, Vec<f64>>,
}

impl QuantilePruner {
    /// `q` is the surviving fraction, e.g. `0.2` keeps the top 20%.
    pub fn new(q: f64) -> Result<Self, PrunerError> {
        if !(q > 0.0 && q < 1.0) {
            return Err(PrunerError::Quantile(q));
        }
        Ok(Self {
            q,
            min_history: DEFAULT_MIN_HISTORY,
            per_step_values: BTreeMap::new(),
        })
    }

    pub fn with_min_history(mut self, min_history: usize) -> Self {
        self.min_history = min_history;
        self
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn history(&self, step: usize) -> &[f64] {
        self.per_step_values.get(&step).map_or(&[], Vec::as_slice)
    }

    /// Records a step value. Non-finite values are dropped with a warning
    /// and `false` is returned.
    pub fn observe(&mut self, step: usize, value: f64) -> bool {
        if !value.is_finite() {
            warn!("pruner ignoring non-finite value {value} at step {step}");
            return false;
        }
        self.per_step_values.entry(step).or_default().push(value);
        true
    }

    /// Survival threshold at `step`, or `None` during warm-up.
    pub fn threshold(&self, step: usize, direction: Direction) -> Option<f64> {
        let hist = self.history(step);
        if hist.len() < self.min_history.max(1) {
            return None;
        }
        let level = match direction {
            Direction::Maximize => 1.0 - self.q,
            Direction::Minimize => self.q,
        };
        quantile(hist, level)
    }

    /// `running_values` are the candidate's raw results for steps `0..=step`.
    pub fn should_prune(&self, step: usize, running_values: &[f64], direction: Direction) -> bool {
        if running_values.is_empty() {
            return false;
        }
        let Some(threshold) = self.threshold(step, direction) else {
            return false;
        };
        let mean = mean(running_values);
        direction.is_better(threshold, mean)
    }

    /// Feeds a finished or pruned candidate's raw values, one running mean per step.
    pub fn observe_run(&mut self, values: &[f64]) {
        let mut sum = 0.0;
        for (i, v) in values.iter().enumerate() {
            sum += v;
            self.observe(i, sum / (i + 1) as f64);
        }
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Wraps an objective so each candidate is evaluated `n` times and the
/// mean is reported.
pub struct RepeatedObjective<F> {
    pub inner: F,
    n: usize,
}

impl<F> RepeatedObjective<F>
where
    F: Fn(&Config) -> Result<f64, ObjectiveError>,
{
    pub fn new(inner: F, n: usize) -> Result<Self, PrunerError> {
        if n == 0 {
            return Err(PrunerError::Repeats);
        }
        Ok(Self { inner, n })
    }

    pub fn repeats(&self) -> usize {
        self.n
    }
}

/// Runs the inner objective up to `n` times.
///
/// Before every run except the first, the pruner (if any) is asked whether
/// the running mean so far is still competitive. Each result is also
/// observed into `pruner` as a running mean. An inner error or non-finite
/// value fails the whole evaluation, keeping the values collected so far.
pub fn evaluate_repeated<F>(
    obj: &RepeatedObjective<F>,
    config: &Config,
    mut pruner: Option<&mut QuantilePruner>,
    direction: Direction,
) -> Evaluation
where
    F: Fn(&Config) -> Result<f64, ObjectiveError>,
{
    let mut values = Vec::with_capacity(obj.n);
    let mut run_config = config.clone();
    for i in 0..obj.n {
        run_config.trial.repeat = i;
        match (obj.inner)(&run_config) {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(v) => return Evaluation::failed(format!("objective returned non-finite value {v}"), values),
            Err(e) => return Evaluation::failed(e.to_string(), values),
        }
        if let Some(p) = pruner.as_deref_mut() {
            let prune = i + 1 < obj.n && p.should_prune(i, &values, direction);
            p.observe(i, mean(&values));
            if prune {
                return Evaluation::pruned(values);
            }
        }
    }
    Evaluation::finished(mean(&values), values)
}
