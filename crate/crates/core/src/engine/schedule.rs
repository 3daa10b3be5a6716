use std::fmt;

use serde::{Deserialize, Serialize};

use crate::sampling::Temperature;

/// Fraction of the budget spent on uniform random search by default.
pub const DEFAULT_RANDOM_FRACTION: f64 = 0.25;

/// Temperature floor of the local-search phase.
pub const TAU_MIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetKind {
    /// `total` and `consumed` are seconds of elapsed time.
    Wallclock,
    /// `total` and `consumed` count issued evaluations.
    Steps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub kind: BudgetKind,
    pub total: f64,
    pub consumed: f64,
}

impl Budget {
    pub fn steps(total: u64) -> Self {
        Self {
            kind: BudgetKind::Steps,
            total: total as f64,
            consumed: 0.0,
        }
    }

    pub fn wallclock(seconds: f64) -> Self {
        Self {
            kind: BudgetKind::Wallclock,
            total: seconds,
            consumed: 0.0,
        }
    }

    /// Consumed fraction in `[0, 1]`. A zero budget counts as spent.
    pub fn fraction(&self) -> f64 {
        if self.total > 0.0 {
            (self.consumed / self.total).clamp(0.0, 1.0)
        } else {
            1.0
        }
    }

    pub fn is_exhausted(&self) -> bool {
        self.consumed >= self.total
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            BudgetKind::Steps => write!(f, "{} steps", self.total),
            BudgetKind::Wallclock => write!(f, "{}s", self.total),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    RandomSearch,
    LocalSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub budget: Budget,
    pub phase: Phase,
    pub tau: Temperature,
    pub random_fraction: f64,
}

impl ScheduleState {
    pub fn new(budget: Budget, random_fraction: f64) -> Self {
        let mut s = Self {
            budget,
            phase: Phase::RandomSearch,
            tau: Temperature::HOT,
            random_fraction,
        };
        s.refresh();
        s
    }

    /// Recomputes phase and temperature from the consumed budget.
    pub fn refresh(&mut self) {
        self.phase = phase_at(&self.budget, self.random_fraction);
        self.tau = temperature_at(&self.budget, self.random_fraction);
    }
}

pub fn phase_at(budget: &Budget, random_fraction: f64) -> Phase {
    if budget.fraction() < random_fraction {
        Phase::RandomSearch
    } else {
        Phase::LocalSearch
    }
}

/// τ = 1 through the random phase, then linear decay to [`TAU_MIN`] at the
/// end of the budget.
pub fn temperature_at(budget: &Budget, random_fraction: f64) -> Temperature {
    let f = budget.fraction();
    if f <= random_fraction || random_fraction >= 1.0 {
        return Temperature::HOT;
    }
    let decayed = 1.0 - (f - random_fraction) / (1.0 - random_fraction);
    Temperature::new(decayed.max(TAU_MIN))
}
