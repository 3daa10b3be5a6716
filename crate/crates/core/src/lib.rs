//! Two-phase black-box optimizer: uniform random search followed by
//! temperature-annealed local perturbation of the incumbent.

pub mod engine;
pub mod exec;
pub mod objective;
pub mod persist;
pub mod pruning;
pub mod sampling;
pub mod space;
pub mod util;

pub use engine::{
    run, Best, Budget, BudgetKind, Callback, CallbackError, Direction, EngineError, Evaluation, EvaluationRecord,
    Outcome, RunOptions, SearchOutcome, SearchResult, SearchState, Status,
};
pub use exec::{resolve_workers, WorkerSpec};
pub use objective::{Config, ObjectiveError, ObjectiveResult};
pub use pruning::{QuantilePruner, RepeatedObjective};
pub use sampling::{Rng, Temperature};
pub use space::{
    Candidate, ChoiceSpec, CustomSpec, FloatSpec, IntSpec, Origin, ParamSpec, SearchSpace, SpaceError, Value,
};
