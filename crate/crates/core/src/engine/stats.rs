use serde::Serialize;

use super::{Direction, EvaluationRecord, Status};
use crate::pruning::{mean, quantile_sorted};
use crate::space::Candidate;

/// Number of top configurations kept in [`Statistics::top`].
pub const TOP_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Percentiles {
    pub p0: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p100: f64,
}

/// Summary over finished records only.
#[derive(Debug, Clone, PartialEq)]
pub struct Statistics {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub percentiles: Percentiles,
    /// Best-first, ties in history order.
    pub top: Vec<(Candidate, f64)>,
}

/// `None` when no record finished.
pub fn statistics(history: &[EvaluationRecord], direction: Direction, top_k: usize) -> Option<Statistics> {
    let finished: Vec<(&Candidate, f64)> = history
        .iter()
        .filter(|r| r.status == Status::Finished)
        .filter_map(|r| r.value.map(|v| (&r.candidate, v)))
        .collect();
    if finished.is_empty() {
        return None;
    }
    let values: Vec<f64> = finished.iter().map(|(_, v)| *v).collect();
    let mean = mean(&values);
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p| quantile_sorted(&sorted, p);
    let mut ranked = finished.clone();
    ranked.sort_by(|a, b| match direction {
        Direction::Maximize => b.1.total_cmp(&a.1),
        Direction::Minimize => a.1.total_cmp(&b.1),
    });
    Some(Statistics {
        count: values.len(),
        mean,
        std: var.sqrt(),
        percentiles: Percentiles {
            p0: q(0.0),
            p25: q(0.25),
            p50: q(0.5),
            p75: q(0.75),
            p100: q(1.0),
        },
        top: ranked.into_iter().take(top_k).map(|(c, v)| (c.clone(), v)).collect(),
    })
}
