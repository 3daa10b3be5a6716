//! Parsing helpers for human-written budgets.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::engine::Budget;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty duration")]
    Empty,
    #[error("invalid duration term {token:?} in {input:?}: expected <number><unit> with unit one of s, sec, seconds, min, m, h, hr, hours, d, days")]
    Duration { token: String, input: String },
    #[error("cannot parse {0:?} as a budget: expected a duration such as \"1h 30min\" or a step count such as \"300 steps\"")]
    Budget(String),
}

/// Non-negative span of time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Duration {
    pub seconds: f64,
}

impl Duration {
    pub fn from_secs(seconds: f64) -> Self {
        Self { seconds }
    }
}

impl fmt::Display for Duration {
    /// Whole seconds are split into `d h min s` terms; anything else is
    /// written as exact seconds.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.seconds;
        if s.fract() != 0.0 || s >= 9.0e15 {
            return write!(f, "{s}s");
        }
        let mut rest = s as u64;
        if rest == 0 {
            return f.write_str("0s");
        }
        let mut parts = Vec::new();
        for (unit, size) in [("d", 86_400), ("h", 3_600), ("min", 60), ("s", 1)] {
            if rest >= size {
                parts.push(format!("{}{unit}", rest / size));
                rest %= size;
            }
        }
        f.write_str(&parts.join(" "))
    }
}

static TERM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([0-9]*\.?[0-9]+(?:[eE][0-9]+)?)\s*([A-Za-z]*)$").unwrap());

fn unit_seconds(unit: &str) -> Option<f64> {
    Some(match unit.to_ascii_lowercase().as_str() {
        "" | "s" | "sec" | "seconds" => 1.0,
        "m" | "min" => 60.0,
        "h" | "hr" | "hours" => 3_600.0,
        "d" | "days" => 86_400.0,
        _ => return None,
    })
}

/// Splits `"1h 30 min"` into terms, attaching a bare unit to the number before it.
fn terms(input: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for tok in input.split_whitespace() {
        let is_unit = tok.chars().all(|c| c.is_ascii_alphabetic());
        match out.last_mut() {
            Some(prev) if is_unit && prev.chars().last().is_some_and(|c| c.is_ascii_digit()) => {
                prev.push_str(tok);
            }
            _ => out.push(tok.to_string()),
        }
    }
    out
}

/// Parses whitespace-separated `<number><unit>` terms and sums them.
/// A bare number is seconds; `m` means minutes.
pub fn parse_duration(s: &str) -> Result<Duration, ParseError> {
    let terms = terms(s);
    if terms.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut total = 0.0;
    for term in terms {
        let bad = || ParseError::Duration {
            token: term.clone(),
            input: s.to_string(),
        };
        let caps = TERM.captures(&term).ok_or_else(bad)?;
        let number: f64 = caps[1].parse().map_err(|_| bad())?;
        let unit = unit_seconds(&caps[2]).ok_or_else(bad)?;
        total += number * unit;
    }
    if !total.is_finite() {
        return Err(ParseError::Duration {
            token: s.to_string(),
            input: s.to_string(),
        });
    }
    Ok(Duration { seconds: total })
}

static STEPS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^\s*([0-9]+)\s*steps?\s*$").unwrap());

/// Parses a step count: a bare integer or `"<N> steps"`.
pub fn parse_steps(s: &str) -> Result<u64, ParseError> {
    let t = s.trim();
    if let Some(c) = STEPS.captures(t) {
        return c[1].parse().map_err(|_| ParseError::Budget(s.to_string()));
    }
    t.parse().map_err(|_| ParseError::Budget(s.to_string()))
}

/// `"<N> steps"` gives a step budget; anything in the duration grammar gives
/// a wall-clock budget.
pub fn parse_run_args(s: &str) -> Result<Budget, ParseError> {
    if let Some(c) = STEPS.captures(s) {
        let n = c[1].parse().map_err(|_| ParseError::Budget(s.to_string()))?;
        return Ok(Budget::steps(n));
    }
    parse_duration(s)
        .map(|d| Budget::wallclock(d.seconds))
        .map_err(|_| ParseError::Budget(s.to_string()))
}
