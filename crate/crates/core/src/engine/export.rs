use std::io::Write;

use chrono::SecondsFormat;
use serde_json::json;

use super::{Budget, Direction, EvaluationRecord, SearchResult, Statistics};
use crate::space::SearchSpace;

/// History CSV header: id, origin, status, value, parameters by name, timestamps.
pub fn history_columns(space: &SearchSpace) -> Vec<String> {
    let mut params: Vec<&str> = space.names().collect();
    params.sort_unstable();
    ["id", "origin", "status", "value"]
        .into_iter()
        .map(String::from)
        .chain(params.into_iter().map(String::from))
        .chain(["started_at", "ended_at"].into_iter().map(String::from))
        .collect()
}

fn cell(json: &serde_json::Value) -> String {
    match json {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Null => String::new(),
        other => other.to_string(),
    }
}

pub fn write_history_csv<W: Write>(
    writer: W,
    history: &[EvaluationRecord],
    space: &SearchSpace,
) -> Result<(), csv::Error> {
    let columns = history_columns(space);
    let mut params: Vec<&str> = space.names().collect();
    params.sort_unstable();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&columns)?;
    for r in history {
        let record = space.record(&r.candidate);
        let mut row = vec![
            r.candidate.id.to_string(),
            r.candidate.origin.to_string(),
            r.status.to_string(),
            r.value.map(|v| json!(v).to_string()).unwrap_or_default(),
        ];
        row.extend(params.iter().map(|p| record.get(*p).map(cell).unwrap_or_default()));
        row.push(r.started_at.to_rfc3339_opts(SecondsFormat::Micros, true));
        row.push(r.ended_at.to_rfc3339_opts(SecondsFormat::Micros, true));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn statistics_json(stats: &Statistics, space: &SearchSpace) -> serde_json::Value {
    json!({
        "count": stats.count,
        "mean": stats.mean,
        "std": stats.std,
        "percentiles": stats.percentiles,
        "top": stats.top.iter().map(|(c, v)| json!({
            "id": c.id,
            "params": space.record(c),
            "value": v,
        })).collect::<Vec<_>>(),
    })
}

/// `{best: {params, value}, statistics, budget, seed, version, ...}`.
pub fn result_json(
    result: &SearchResult,
    space: &SearchSpace,
    direction: Direction,
    budget: &Budget,
    seed: u64,
) -> serde_json::Value {
    json!({
        "best": result.best.as_ref().map(|b| json!({
            "id": b.candidate.id,
            "params": space.record(&b.candidate),
            "value": b.value,
        })),
        "outcome": result.outcome,
        "direction": direction,
        "statistics": result.statistics(direction).map(|s| statistics_json(&s, space)),
        "budget": budget,
        "evaluations": result.history.len(),
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
    })
}
