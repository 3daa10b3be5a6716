use std::path::PathBuf;

use chrono::{DateTime, Utc};
use log::debug;
use thiserror::Error;

use super::{
    Best, Budget, Direction, EngineError, Evaluation, EvaluationRecord, Outcome, SearchResult, SearchState,
    DEFAULT_RANDOM_FRACTION,
};
use crate::exec::{self, WorkerSpec};
use crate::objective::{Config, ObjectiveError};
use crate::persist::{attach, Attach, Autosaver};
use crate::pruning::QuantilePruner;
use crate::space::{validate_space, Candidate, SearchSpace};

/// Consecutive worker crashes that abort a search.
pub const MAX_CONSECUTIVE_CRASHES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct CallbackError(pub String);

impl From<&str> for CallbackError {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for CallbackError {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// Hooks invoked serially on the controller thread. An error aborts the
/// search after the checkpoint (if any) is flushed.
#[allow(unused_variables)]
pub trait Callback {
    fn on_search_start(&mut self, state: &SearchState) -> Result<(), CallbackError> {
        Ok(())
    }

    fn on_candidate_issued(&mut self, candidate: &Candidate) -> Result<(), CallbackError> {
        Ok(())
    }

    fn on_evaluated(&mut self, record: &EvaluationRecord) -> Result<(), CallbackError> {
        Ok(())
    }

    fn on_new_best(&mut self, best: &Best) -> Result<(), CallbackError> {
        Ok(())
    }

    fn on_search_end(&mut self, result: &SearchResult) -> Result<(), CallbackError> {
        Ok(())
    }
}

fn hook(name: &'static str, r: Result<(), CallbackError>) -> Result<(), EngineError> {
    r.map_err(|e| EngineError::Callback {
        hook: name,
        message: e.0,
    })
}

/// Work item sent to a worker: the configuration record plus what the
/// worker needs to evaluate it without touching controller state.
#[derive(Debug, Clone)]
pub struct Task {
    pub id: u64,
    pub config: Config,
    /// Pruner snapshot taken at issue time.
    pub pruner: Option<QuantilePruner>,
    pub repeats: usize,
    pub direction: Direction,
}

#[derive(Debug, Clone)]
pub struct Settlement {
    pub id: u64,
    pub evaluation: Evaluation,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    /// The objective panicked rather than returning.
    pub crashed: bool,
}

/// Single-threaded owner of the search state, pruner, callbacks and checkpoint.
pub struct Controller<'a> {
    state: SearchState,
    pruner: Option<QuantilePruner>,
    repeats: usize,
    callbacks: Vec<Box<dyn Callback + 'a>>,
    autosave: Option<Autosaver>,
    crash_streak: usize,
}

impl<'a> Controller<'a> {
    pub fn new(state: SearchState) -> Self {
        Self {
            state,
            pruner: None,
            repeats: 1,
            callbacks: Vec::new(),
            autosave: None,
            crash_streak: 0,
        }
    }

    pub fn with_pruner(mut self, pruner: Option<QuantilePruner>) -> Self {
        self.pruner = pruner;
        self
    }

    pub fn with_repeats(mut self, repeats: usize) -> Self {
        self.repeats = repeats.max(1);
        self
    }

    pub fn with_callback(mut self, callback: Box<dyn Callback + 'a>) -> Self {
        self.callbacks.push(callback);
        self
    }

    pub fn with_autosave(mut self, autosave: Option<Autosaver>) -> Self {
        self.autosave = autosave;
        self
    }

    pub fn state(&self) -> &SearchState {
        &self.state
    }

    pub fn pruner(&self) -> Option<&QuantilePruner> {
        self.pruner.as_ref()
    }

    pub fn autosaver(&self) -> Option<&Autosaver> {
        self.autosave.as_ref()
    }

    pub fn start(&mut self) -> Result<(), EngineError> {
        for cb in &mut self.callbacks {
            hook("on_search_start", cb.on_search_start(&self.state))?;
        }
        Ok(())
    }

    /// Issues the next task, or `None` once the budget is spent and the queue is empty.
    pub fn next_task(&mut self) -> Result<Option<Task>, EngineError> {
        if !self.state.has_work() {
            return Ok(None);
        }
        let candidate = self.state.suggest_next();
        debug!("issued candidate {} ({})", candidate.id, candidate.origin);
        for cb in &mut self.callbacks {
            hook("on_candidate_issued", cb.on_candidate_issued(&candidate))?;
        }
        let mut config = Config::new(self.state.space().record(&candidate));
        config.trial.id = candidate.id;
        Ok(Some(Task {
            id: candidate.id,
            config,
            pruner: self.pruner.clone(),
            repeats: self.repeats,
            direction: self.state.direction(),
        }))
    }

    /// Reports a settled evaluation, updates the pruner, flushes the
    /// checkpoint and runs callbacks, in that order.
    pub fn settle(&mut self, s: Settlement) -> Result<(), EngineError> {
        let observe = !matches!(s.evaluation.outcome, Outcome::Failed(_));
        let intermediates = s.evaluation.intermediates.clone();
        let summary = self.state.report(s.id, s.evaluation, s.started_at, s.ended_at)?;
        if observe {
            if let Some(p) = self.pruner.as_mut() {
                p.observe_run(&intermediates);
            }
        }
        self.crash_streak = if s.crashed { self.crash_streak + 1 } else { 0 };
        self.flush()?;
        if self.crash_streak >= MAX_CONSECUTIVE_CRASHES {
            return Err(EngineError::CrashLoop(self.crash_streak));
        }
        let record = self.state.history().last().expect("just reported");
        for cb in &mut self.callbacks {
            hook("on_evaluated", cb.on_evaluated(record))?;
        }
        if summary.new_best {
            let best = self.state.best().expect("new best");
            for cb in &mut self.callbacks {
                hook("on_new_best", cb.on_new_best(best))?;
            }
        }
        Ok(())
    }

    /// Writes the checkpoint if one is attached.
    pub fn flush(&mut self) -> Result<(), EngineError> {
        if let Some(saver) = self.autosave.as_mut() {
            saver.flush(&self.state.checkpoint(self.pruner.as_ref()))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<SearchResult, EngineError> {
        self.flush()?;
        let result = self.state.into_result();
        for cb in &mut self.callbacks {
            hook("on_search_end", cb.on_search_end(&result))?;
        }
        Ok(result)
    }
}

pub struct RunOptions<'a> {
    pub workers: WorkerSpec,
    pub seed: u64,
    pub pruner: Option<QuantilePruner>,
    /// Evaluations per candidate; the mean is reported.
    pub eval_repeats: usize,
    pub random_fraction: f64,
    pub callbacks: Vec<Box<dyn Callback + 'a>>,
    /// File to resume from and save to, or a directory for a new checkpoint file.
    pub checkpoint: Option<PathBuf>,
    /// Configurations (possibly partial) evaluated before anything else.
    pub queue: Vec<serde_json::Map<String, serde_json::Value>>,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        Self {
            workers: WorkerSpec::count(1).expect("one worker"),
            seed: 0,
            pruner: None,
            eval_repeats: 1,
            random_fraction: DEFAULT_RANDOM_FRACTION,
            callbacks: Vec::new(),
            checkpoint: None,
            queue: Vec::new(),
        }
    }
}

/// Runs a complete search and returns once the budget is spent and every
/// issued evaluation has settled.
///
/// With one worker (and no device binding) evaluations run on the calling
/// thread; otherwise a worker pool is used.
pub fn run<F>(
    space: SearchSpace,
    objective: F,
    direction: Direction,
    budget: Budget,
    options: RunOptions<'_>,
) -> Result<SearchResult, EngineError>
where
    F: Fn(&Config) -> Result<f64, ObjectiveError> + Sync,
{
    let violations = validate_space(&space);
    if !violations.is_empty() {
        return Err(EngineError::InvalidSpace(violations));
    }
    if options.eval_repeats == 0 {
        return Err(EngineError::InvalidOption("eval_repeats must be at least 1".into()));
    }
    let RunOptions {
        workers,
        seed,
        pruner,
        eval_repeats,
        random_fraction,
        callbacks,
        checkpoint,
        queue,
    } = options;

    let fresh = |space: SearchSpace| -> Result<SearchState, EngineError> {
        let mut state = SearchState::new(space, direction, budget, seed, random_fraction)?;
        for partial in &queue {
            state.enqueue(partial)?;
        }
        Ok(state)
    };
    let (state, pruner, autosave) = match checkpoint {
        None => (fresh(space)?, pruner, None),
        Some(path) => match attach(&path, &space)? {
            Attach::Fresh { path } => (fresh(space)?, pruner, Some(Autosaver::new(path))),
            Attach::Resumed { path, checkpoint } => {
                let pruner = checkpoint.pruner.clone().or(pruner);
                let state = SearchState::from_checkpoint(space, *checkpoint, budget)?;
                (state, pruner, Some(Autosaver::new(path)))
            }
        },
    };

    let mut controller = Controller::new(state)
        .with_pruner(pruner)
        .with_repeats(eval_repeats)
        .with_autosave(autosave);
    for cb in callbacks {
        controller = controller.with_callback(cb);
    }

    if workers.resolved == 1 {
        let device = workers.device_bindings.as_ref().and_then(|b| b.first().cloned());
        exec::run_sequential(&mut controller, &objective, device.as_deref())?;
    } else {
        exec::run_parallel(&mut controller, &objective, &workers)?;
    }
    controller.finish()
}
