//! The two-phase search controller.
//!
//! [`SearchState`] is the ask/tell core: [`SearchState::suggest_next`] issues
//! candidates (queue first, then uniform random search, then annealed local
//! perturbation of the incumbent) and [`SearchState::report`] settles them.
//! [`run`] drives it end to end through [`crate::exec`].

mod controller;
mod export;
mod schedule;
mod stats;

use std::collections::VecDeque;
use std::fmt;
use std::time::Instant;

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use controller::{run, Callback, CallbackError, Controller, RunOptions, Settlement, Task};
pub use export::{history_columns, result_json, write_history_csv};
pub use schedule::{
    phase_at, temperature_at, Budget, BudgetKind, Phase, ScheduleState, DEFAULT_RANDOM_FRACTION, TAU_MIN,
};
pub use stats::{statistics, Percentiles, Statistics, TOP_K};

use crate::exec::ExecError;
use crate::persist::{Checkpoint, PersistError, CHECKPOINT_VERSION};
use crate::pruning::QuantilePruner;
use crate::sampling::{mutate_candidate, sample, sample_candidate, Rng, Temperature};
use crate::space::{validate_space, Candidate, Origin, SearchSpace, SpaceError, Value, Violation};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid search space: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidSpace(Vec<Violation>),
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("candidate {0} was not issued or was already reported")]
    UnknownCandidate(u64),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("callback {hook} failed: {message}")]
    Callback { hook: &'static str, message: String },
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("aborting after {0} consecutive worker crashes")]
    CrashLoop(usize),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// Strict improvement of `candidate` over `incumbent`.
    pub fn is_better(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Direction::Maximize => candidate > incumbent,
            Direction::Minimize => candidate < incumbent,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Maximize => "maximize",
            Direction::Minimize => "minimize",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Finished(f64),
    Pruned,
    Failed(String),
}

/// What an evaluation produced: the outcome plus the raw per-run values.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub outcome: Outcome,
    pub intermediates: Vec<f64>,
}

impl Evaluation {
    pub fn finished(value: f64, intermediates: Vec<f64>) -> Self {
        Self {
            outcome: Outcome::Finished(value),
            intermediates,
        }
    }

    pub fn pruned(intermediates: Vec<f64>) -> Self {
        Self {
            outcome: Outcome::Pruned,
            intermediates,
        }
    }

    pub fn failed(reason: impl Into<String>, intermediates: Vec<f64>) -> Self {
        Self {
            outcome: Outcome::Failed(reason.into()),
            intermediates,
        }
    }
}

impl From<f64> for Evaluation {
    fn from(v: f64) -> Self {
        Evaluation::finished(v, vec![v])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Finished,
    Pruned,
    Failed,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Finished => "finished",
            Status::Pruned => "pruned",
            Status::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub candidate: Candidate,
    pub status: Status,
    pub value: Option<f64>,
    pub intermediates: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
}

/// The incumbent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Best {
    pub candidate: Candidate,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportSummary {
    pub status: Status,
    pub new_best: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchOutcome {
    Completed,
    /// Nothing finished, either because nothing ran or every evaluation failed or was pruned.
    NoSuccessfulEvaluation,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: Option<Best>,
    pub history: Vec<EvaluationRecord>,
    pub outcome: SearchOutcome,
}

impl SearchResult {
    pub fn best_value(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.value)
    }

    pub fn statistics(&self, direction: Direction) -> Option<Statistics> {
        statistics(&self.history, direction, TOP_K)
    }
}

#[derive(Debug, Clone)]
struct Clock {
    offset: f64,
    started: Instant,
}

impl Clock {
    fn new(offset: f64) -> Self {
        Self {
            offset,
            started: Instant::now(),
        }
    }

    fn elapsed(&self) -> f64 {
        self.offset + self.started.elapsed().as_secs_f64()
    }
}

/// Mutable search state owned by the controller.
#[derive(Debug, Clone)]
pub struct SearchState {
    space: SearchSpace,
    direction: Direction,
    best: Option<Best>,
    history: Vec<EvaluationRecord>,
    queue: VecDeque<Candidate>,
    pending: IndexMap<u64, Candidate>,
    rng: Rng,
    schedule: ScheduleState,
    next_id: u64,
    clock: Clock,
}

fn check_budget(budget: &Budget) -> Result<(), EngineError> {
    if !budget.total.is_finite() || budget.total < 0.0 {
        return Err(EngineError::InvalidBudget(format!(
            "total must be finite and non-negative, got {}",
            budget.total
        )));
    }
    if budget.kind == BudgetKind::Steps && budget.total.fract() != 0.0 {
        return Err(EngineError::InvalidBudget(format!(
            "step budget must be a whole number, got {}",
            budget.total
        )));
    }
    Ok(())
}

impl SearchState {
    pub fn new(
        space: SearchSpace,
        direction: Direction,
        budget: Budget,
        seed: u64,
        random_fraction: f64,
    ) -> Result<Self, EngineError> {
        let violations = validate_space(&space);
        if !violations.is_empty() {
            return Err(EngineError::InvalidSpace(violations));
        }
        check_budget(&budget)?;
        if !(0.0..=1.0).contains(&random_fraction) {
            return Err(EngineError::InvalidOption(format!(
                "random_fraction must lie in [0, 1], got {random_fraction}"
            )));
        }
        let budget = Budget {
            consumed: 0.0,
            ..budget
        };
        Ok(Self {
            space,
            direction,
            best: None,
            history: Vec::new(),
            queue: VecDeque::new(),
            pending: IndexMap::new(),
            rng: Rng::new(seed),
            schedule: ScheduleState::new(budget, random_fraction),
            next_id: 1,
            clock: Clock::new(0.0),
        })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn best(&self) -> Option<&Best> {
        self.best.as_ref()
    }

    pub fn history(&self) -> &[EvaluationRecord] {
        &self.history
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn in_flight(&self) -> usize {
        self.pending.len()
    }

    pub fn schedule(&self) -> &ScheduleState {
        &self.schedule
    }

    pub fn budget(&self) -> &Budget {
        &self.schedule.budget
    }

    pub fn seed(&self) -> u64 {
        self.rng.seed()
    }

    fn refresh_clock(&mut self) {
        if self.schedule.budget.kind == BudgetKind::Wallclock {
            self.schedule.budget.consumed = self.clock.elapsed();
        }
    }

    /// Whether another candidate may be issued. Queued candidates are
    /// always drained, even past the budget.
    pub fn has_work(&mut self) -> bool {
        self.refresh_clock();
        !self.queue.is_empty() || !self.schedule.budget.is_exhausted()
    }

    /// Issues the next candidate: queue, then random search, then local search.
    pub fn suggest_next(&mut self) -> Candidate {
        self.refresh_clock();
        let mut candidate = match self.queue.pop_front() {
            Some(queued) => queued,
            None => {
                self.schedule.refresh();
                match (self.schedule.phase, &self.best) {
                    (Phase::LocalSearch, Some(best)) => {
                        mutate_candidate(&self.space, &best.candidate, self.schedule.tau, &mut self.rng)
                    }
                    _ => sample_candidate(&self.space, &mut self.rng),
                }
            }
        };
        candidate.id = self.next_id;
        self.next_id += 1;
        if self.schedule.budget.kind == BudgetKind::Steps {
            self.schedule.budget.consumed += 1.0;
        }
        self.pending.insert(candidate.id, candidate.clone());
        candidate
    }

    /// Settles an issued candidate. Non-finite values are recorded as failures;
    /// the incumbent only changes on strict improvement.
    pub fn report(
        &mut self,
        id: u64,
        evaluation: Evaluation,
        started_at: DateTime<Utc>,
        ended_at: DateTime<Utc>,
    ) -> Result<ReportSummary, EngineError> {
        let candidate = self
            .pending
            .shift_remove(&id)
            .ok_or(EngineError::UnknownCandidate(id))?;
        let Evaluation {
            outcome,
            mut intermediates,
        } = evaluation;
        if intermediates.iter().any(|v| !v.is_finite()) {
            warn!("dropping non-finite intermediate values of candidate {id}");
            intermediates.retain(|v| v.is_finite());
        }
        let (status, value, error) = match outcome {
            Outcome::Finished(v) if v.is_finite() => (Status::Finished, Some(v), None),
            Outcome::Finished(v) => (Status::Failed, None, Some(format!("non-finite objective value {v}"))),
            Outcome::Pruned if intermediates.is_empty() => (
                Status::Failed,
                None,
                Some("pruned without intermediate values".to_string()),
            ),
            Outcome::Pruned => (Status::Pruned, None, None),
            Outcome::Failed(reason) => (Status::Failed, None, Some(reason)),
        };
        let new_best = match (value, &self.best) {
            (Some(v), Some(best)) => self.direction.is_better(v, best.value),
            (Some(_), None) => true,
            (None, _) => false,
        };
        if new_best {
            self.best = Some(Best {
                candidate: candidate.clone(),
                value: value.expect("finished value"),
            });
        }
        self.history.push(EvaluationRecord {
            candidate,
            status,
            value,
            intermediates,
            error,
            started_at,
            ended_at,
        });
        Ok(ReportSummary { status, new_best })
    }

    /// Reports a plain objective value with the current time as both timestamps.
    pub fn report_value(&mut self, id: u64, value: f64) -> Result<ReportSummary, EngineError> {
        let now = Utc::now();
        self.report(id, Evaluation::from(value), now, now)
    }

    /// Queues a user-supplied (possibly partial) configuration given as
    /// plain JSON values. Missing parameters are sampled.
    pub fn enqueue(&mut self, partial: &serde_json::Map<String, serde_json::Value>) -> Result<(), SpaceError> {
        let mut values = IndexMap::new();
        for (name, json) in partial {
            let spec = self
                .space
                .get(name)
                .ok_or_else(|| SpaceError::UnknownParam(name.clone()))?;
            values.insert(name.clone(), spec.value_from_json(name, json)?);
        }
        self.enqueue_values(values)
    }

    pub fn enqueue_values(&mut self, partial: IndexMap<String, Value>) -> Result<(), SpaceError> {
        for (name, value) in &partial {
            let spec = self
                .space
                .get(name)
                .ok_or_else(|| SpaceError::UnknownParam(name.clone()))?;
            if !spec.contains(value) {
                return Err(SpaceError::OutOfDomain {
                    param: name.clone(),
                    value: match value {
                        Value::Custom(_) | Value::Choice(_) => spec.to_json(value).to_string(),
                        _ => format!("{value:?}"),
                    },
                });
            }
        }
        let mut partial = partial;
        let values = self
            .space
            .iter()
            .map(|(name, spec)| {
                let v = partial
                    .shift_remove(name)
                    .unwrap_or_else(|| sample(spec, &mut self.rng));
                (name.to_string(), v)
            })
            .collect();
        self.queue.push_back(Candidate {
            id: 0,
            origin: Origin::Queued,
            values,
        });
        Ok(())
    }

    /// Snapshot of everything needed to resume. In-flight candidates are
    /// dropped; queued ones among them go back to the front of the queue.
    pub fn checkpoint(&self, pruner: Option<&QuantilePruner>) -> Checkpoint {
        let mut queue: Vec<Candidate> = self
            .pending
            .values()
            .filter(|c| c.origin == Origin::Queued)
            .cloned()
            .map(|mut c| {
                c.id = 0;
                c
            })
            .collect();
        queue.extend(self.queue.iter().cloned());
        let mut budget = self.schedule.budget;
        budget.consumed = match budget.kind {
            BudgetKind::Steps => self.history.len() as f64,
            BudgetKind::Wallclock => self.clock.elapsed(),
        };
        let mut schedule = self.schedule;
        schedule.budget = budget;
        Checkpoint {
            version: CHECKPOINT_VERSION,
            space_digest: self.space.digest(),
            direction: self.direction,
            budget,
            schedule,
            rng_state: self.rng.state(),
            best: self.best.clone(),
            history: self.history.clone(),
            queue,
            next_id: self.next_id,
            pruner: pruner.cloned(),
            created_at: Utc::now(),
        }
    }

    /// Rebuilds a state from a checkpoint. `budget` supplies the total (the
    /// consumed amount comes from the checkpoint); its kind must match.
    pub fn from_checkpoint(space: SearchSpace, ckpt: Checkpoint, budget: Budget) -> Result<Self, EngineError> {
        let digest = space.digest();
        if digest != ckpt.space_digest {
            return Err(PersistError::DigestMismatch {
                expected: digest,
                found: ckpt.space_digest,
            }
            .into());
        }
        check_budget(&budget)?;
        if budget.kind != ckpt.budget.kind {
            return Err(EngineError::InvalidBudget(format!(
                "checkpoint uses a {:?} budget but {:?} was requested",
                ckpt.budget.kind, budget.kind
            )));
        }
        let consumed = ckpt.budget.consumed;
        let rng = Rng::from_state(&ckpt.rng_state).map_err(|e| PersistError::Corrupt(format!("rng state: {e}")))?;
        let mut schedule = ScheduleState::new(Budget { consumed, ..budget }, ckpt.schedule.random_fraction);
        schedule.refresh();
        let clock_offset = if budget.kind == BudgetKind::Wallclock {
            consumed
        } else {
            0.0
        };
        Ok(Self {
            space,
            direction: ckpt.direction,
            best: ckpt.best,
            history: ckpt.history,
            queue: ckpt.queue.into(),
            pending: IndexMap::new(),
            rng,
            schedule,
            next_id: ckpt.next_id,
            clock: Clock::new(clock_offset),
        })
    }

    pub fn into_result(self) -> SearchResult {
        let outcome = if self.best.is_some() {
            SearchOutcome::Completed
        } else {
            SearchOutcome::NoSuccessfulEvaluation
        };
        SearchResult {
            best: self.best,
            history: self.history,
            outcome,
        }
    }

    /// Current annealing temperature.
    pub fn temperature(&self) -> Temperature {
        self.schedule.tau
    }
}
