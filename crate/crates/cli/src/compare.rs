//! Paired-seed comparison of two schedules on a builtin objective.

use std::io::Write;

use hopper_core::{run, Budget, Direction, EngineError, RunOptions};

use crate::objectives::Builtin;

#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub trial: usize,
    pub seed: u64,
    pub candidate: f64,
    pub baseline: f64,
    /// 1 for a win of the candidate schedule, 0.5 for a tie, 0 otherwise.
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub pairs: Vec<Pair>,
    pub win_rate: f64,
    pub candidate_mean: f64,
    pub candidate_std: f64,
    pub baseline_mean: f64,
    pub baseline_std: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CompareSettings {
    pub steps: u64,
    pub trials: usize,
    pub seed_base: u64,
    pub random_fraction: f64,
    pub baseline_random_fraction: f64,
}

/// Best value found by one sequential run.
pub fn best_of(builtin: &Builtin, steps: u64, seed: u64, random_fraction: f64) -> Result<f64, EngineError> {
    let direction = builtin.kind.direction();
    let result = run(
        builtin.space(),
        |c: &hopper_core::Config| builtin.evaluate(c),
        direction,
        Budget::steps(steps),
        RunOptions {
            seed,
            random_fraction,
            ..Default::default()
        },
    )?;
    Ok(result.best_value().unwrap_or(match direction {
        Direction::Maximize => f64::NEG_INFINITY,
        Direction::Minimize => f64::INFINITY,
    }))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs both schedules with seeds `seed_base .. seed_base + trials`.
pub fn compare(builtin: &Builtin, s: CompareSettings) -> Result<Comparison, EngineError> {
    let direction = builtin.kind.direction();
    let mut pairs = Vec::with_capacity(s.trials);
    for trial in 0..s.trials {
        let seed = s.seed_base.wrapping_add(trial as u64);
        let mut b = builtin.clone();
        b.seed = seed;
        let candidate = best_of(&b, s.steps, seed, s.random_fraction)?;
        let baseline = best_of(&b, s.steps, seed, s.baseline_random_fraction)?;
        let score = if direction.is_better(candidate, baseline) {
            1.0
        } else if direction.is_better(baseline, candidate) {
            0.0
        } else {
            0.5
        };
        pairs.push(Pair {
            trial,
            seed,
            candidate,
            baseline,
            score,
        });
    }
    let n = pairs.len().max(1) as f64;
    let win_rate = pairs.iter().map(|p| p.score).sum::<f64>() / n;
    let (candidate_mean, candidate_std) = mean_std(&pairs.iter().map(|p| p.candidate).collect::<Vec<_>>());
    let (baseline_mean, baseline_std) = mean_std(&pairs.iter().map(|p| p.baseline).collect::<Vec<_>>());
    Ok(Comparison {
        pairs,
        win_rate,
        candidate_mean,
        candidate_std,
        baseline_mean,
        baseline_std,
    })
}

pub fn write_pairs_csv<W: Write>(w: W, c: &Comparison) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trial", "seed", "two_phase_best", "baseline_best", "score"])?;
    for p in &c.pairs {
        out.write_record([
            p.trial.to_string(),
            p.seed.to_string(),
            p.candidate.to_string(),
            p.baseline.to_string(),
            p.score.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
