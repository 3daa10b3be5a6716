//! Typed parameter domains and the search-space template.
//!
//! A [`SearchSpace`] is an ordered map from parameter name to [`ParamSpec`].
//! Every spec knows its admissible grid (bounds plus any quantization) and
//! exposes [`ParamSpec::quantize`] and [`ParamSpec::contains`] over it.
//! Sampling and mutation kernels live in [`crate::sampling`].

use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::sampling::{Rng, Temperature};

/// Largest supported number of decimal or significant digits.
pub const MAX_DIGITS: u32 = 15;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("invalid format string {0:?}: expected \"0.<digits>f\" or \"0.<digits>g\" with optional leading ':'")]
    Format(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("value {value} is outside the domain of parameter {param:?}")]
    OutOfDomain { param: String, value: String },
    #[error("parameter {param:?} expects {expected}")]
    TypeMismatch { param: String, expected: &'static str },
    #[error("candidate keys do not match the search space: missing {missing:?}, unexpected {unexpected:?}")]
    KeyMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("invalid search space: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("malformed search space document: {0}")]
    Json(#[from] serde_json::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// One invariant violation found by [`validate_space`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub param: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.param, self.message)
    }
}

/// A concrete parameter value.
///
/// Choice values are stored as indices into [`ChoiceSpec::options`];
/// array-shaped parameters are stored flat in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Int(i64),
    Float(f64),
    Ints(Vec<i64>),
    Floats(Vec<f64>),
    Choice(usize),
    Custom(serde_json::Value),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantMode {
    Linear,
    Log,
}

/// Quantization settings parsed from a format string such as `"0.2f"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quantization {
    pub mode: QuantMode,
    pub digits: u32,
}

/// Parses `"0.Nf"` (linear, N decimals) or `"0.Ng"` (log, N significant digits).
pub fn parse_format(fmt: &str) -> Result<Quantization, SpaceError> {
    let err = || SpaceError::Format(fmt.to_string());
    let body = fmt.strip_prefix(':').unwrap_or(fmt);
    let rest = body.strip_prefix("0.").ok_or_else(err)?;
    let (digits, mode) = match rest.char_indices().last() {
        Some((i, 'f')) => (&rest[..i], QuantMode::Linear),
        Some((i, 'g')) => (&rest[..i], QuantMode::Log),
        _ => return Err(err()),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err());
    }
    let digits: u32 = digits.parse().map_err(|_| err())?;
    Ok(Quantization { mode, digits })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntSpec {
    pub low: i64,
    pub high: i64,
    pub multiple_of: Option<i64>,
    pub power_of: Option<i64>,
    pub shape: Option<Vec<usize>>,
}

/// Resolved admissible set of an [`IntSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum IntGrid {
    Range { low: i64, high: i64 },
    Multiple { step: i64, first: i64, last: i64 },
    Power { base: i64, min_exp: u32, max_exp: u32 },
    Empty,
}

impl IntSpec {
    pub fn new(low: i64, high: i64) -> Self {
        Self {
            low,
            high,
            multiple_of: None,
            power_of: None,
            shape: None,
        }
    }

    pub fn multiple_of(mut self, step: i64) -> Self {
        self.multiple_of = Some(step);
        self
    }

    pub fn power_of(mut self, base: i64) -> Self {
        self.power_of = Some(base);
        self
    }

    pub fn shape(mut self, shape: impl Into<Vec<usize>>) -> Self {
        self.shape = Some(shape.into());
        self
    }

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.low > self.high {
            out.push(format!("low {} exceeds high {}", self.low, self.high));
        }
        if self.multiple_of.is_some() && self.power_of.is_some() {
            out.push("multiple_of and power_of are mutually exclusive".into());
        }
        if let Some(m) = self.multiple_of {
            if m <= 0 {
                out.push(format!("multiple_of must be positive, got {m}"));
            }
        }
        if let Some(b) = self.power_of {
            if b < 2 {
                out.push(format!("power_of must be at least 2, got {b}"));
            }
            if self.low < 1 {
                out.push("power_of requires low >= 1".into());
            }
        }
        shape_violations(self.shape.as_deref(), &mut out);
        if out.is_empty() && self.grid() == IntGrid::Empty {
            out.push(format!(
                "no admissible value in [{}, {}] for the requested grid",
                self.low, self.high
            ));
        }
        out
    }

    pub(crate) fn grid(&self) -> IntGrid {
        if self.low > self.high {
            return IntGrid::Empty;
        }
        match (self.multiple_of, self.power_of) {
            (Some(step), None) if step > 0 => {
                let first = div_ceil(self.low, step);
                let last = div_floor(self.high, step);
                if first > last {
                    IntGrid::Empty
                } else {
                    IntGrid::Multiple {
                        step,
                        first: first * step,
                        last: last * step,
                    }
                }
            }
            (None, Some(base)) if base >= 2 && self.low >= 1 => {
                let mut exp = 0u32;
                let mut value: i64 = 1;
                let mut min_exp = None;
                let mut max_exp = None;
                loop {
                    if value >= self.low && value <= self.high {
                        min_exp.get_or_insert(exp);
                        max_exp = Some(exp);
                    }
                    match value.checked_mul(base) {
                        Some(next) if next <= self.high => {
                            value = next;
                            exp += 1;
                        }
                        _ => break,
                    }
                }
                match (min_exp, max_exp) {
                    (Some(min_exp), Some(max_exp)) => IntGrid::Power { base, min_exp, max_exp },
                    _ => IntGrid::Empty,
                }
            }
            (None, None) => IntGrid::Range {
                low: self.low,
                high: self.high,
            },
            _ => IntGrid::Empty,
        }
    }

    /// Snaps a scalar onto the admissible grid.
    pub fn quantize_scalar(&self, v: i64) -> i64 {
        match self.grid() {
            IntGrid::Range { low, high } => v.clamp(low, high),
            IntGrid::Multiple { step, first, last } => {
                let k = div_round(v, step);
                k.saturating_mul(step).clamp(first, last)
            }
            IntGrid::Power { base, min_exp, max_exp } => {
                let exp = if v <= 1 {
                    min_exp
                } else {
                    let e = ((v as f64).ln() / (base as f64).ln()).round();
                    (e.max(0.0) as u32).clamp(min_exp, max_exp)
                };
                base.pow(exp)
            }
            IntGrid::Empty => v,
        }
    }

    pub fn contains_scalar(&self, v: i64) -> bool {
        match self.grid() {
            IntGrid::Range { low, high } => (low..=high).contains(&v),
            IntGrid::Multiple { step, first, last } => (first..=last).contains(&v) && v % step == 0,
            IntGrid::Power { .. } => exponent_of(self, v).is_some(),
            IntGrid::Empty => false,
        }
    }
}

/// Exponent `k` with `base^k == v` on a power grid, if any.
pub(crate) fn exponent_of(spec: &IntSpec, v: i64) -> Option<u32> {
    if let IntGrid::Power { base, min_exp, max_exp } = spec.grid() {
        (min_exp..=max_exp).find(|&k| base.pow(k) == v)
    } else {
        None
    }
}

fn div_floor(a: i64, b: i64) -> i64 {
    let (q, r) = (a / b, a % b);
    if r != 0 && ((r < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i64, b: i64) -> i64 {
    -div_floor(-a, b)
}

/// Integer division rounding half away from zero.
fn div_round(a: i64, b: i64) -> i64 {
    let (a, b) = (a as i128, b as i128);
    let q = (2 * a.abs() + b) / (2 * b);
    (if a < 0 { -q } else { q }) as i64
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloatSpec {
    pub low: f64,
    pub high: f64,
    pub log: bool,
    pub precision: Option<u32>,
    pub significant_digits: Option<u32>,
    pub shape: Option<Vec<usize>>,
}

/// Resolved admissible set of a [`FloatSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum FloatGrid {
    Interval {
        low: f64,
        high: f64,
    },
    /// Values `k / 10^digits` for `k` in `first..=last`.
    Decimal {
        digits: u32,
        first: i64,
        last: i64,
    },
    /// Values with `digits` significant decimal digits in `[first, last]`.
    Significant {
        digits: u32,
        first: f64,
        last: f64,
    },
    Empty,
}

impl FloatSpec {
    pub fn new(low: f64, high: f64) -> Self {
        Self {
            low,
            high,
            log: false,
            precision: None,
            significant_digits: None,
            shape: None,
        }
    }

    /// Applies a format string: `"0.Nf"` sets `precision`, `"0.Ng"` turns on
    /// log sampling with `significant_digits`.
    pub fn with_format(low: f64, high: f64, fmt: &str) -> Result<Self, SpaceError> {
        let q = parse_format(fmt)?;
        let spec = Self::new(low, high);
        Ok(match q.mode {
            QuantMode::Linear => spec.precision(q.digits),
            QuantMode::Log => spec.log().significant_digits(q.digits),
        })
    }

    pub fn log(mut self) -> Self {
        self.log = true;
        self
    }

    pub fn precision(mut self, digits: u32) -> Self {
        self.precision = Some(digits);
        self
    }

    pub fn significant_digits(mut self, digits: u32) -> Self {
        self.significant_digits = Some(digits);
        self
    }

    pub fn shape(mut self, shape: impl Into<Vec<usize>>) -> Self {
        self.shape = Some(shape.into());
        self
    }

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.low.is_finite() || !self.high.is_finite() {
            out.push("bounds must be finite".into());
        } else if self.low > self.high {
            out.push(format!("low {} exceeds high {}", self.low, self.high));
        }
        if self.log && (self.low.is_nan() || self.low <= 0.0) {
            out.push("log requires low > 0".into());
        }
        if let Some(p) = self.precision {
            if self.log {
                out.push("precision is only valid for linear parameters; use significant_digits with log".into());
            }
            if p > MAX_DIGITS {
                out.push(format!("precision must be at most {MAX_DIGITS}"));
            }
        }
        if let Some(s) = self.significant_digits {
            if !self.log {
                out.push("significant_digits is only valid for log parameters; use precision for linear".into());
            }
            if s == 0 || s > MAX_DIGITS {
                out.push(format!("significant_digits must be in 1..={MAX_DIGITS}"));
            }
        }
        shape_violations(self.shape.as_deref(), &mut out);
        if out.is_empty() && self.grid() == FloatGrid::Empty {
            out.push(format!(
                "no admissible value in [{}, {}] at the requested quantization",
                self.low, self.high
            ));
        }
        out
    }

    pub(crate) fn grid(&self) -> FloatGrid {
        if self.low.is_nan() || self.high.is_nan() || self.low > self.high {
            return FloatGrid::Empty;
        }
        match (self.log, self.precision, self.significant_digits) {
            (false, Some(digits), None) if digits <= MAX_DIGITS => {
                let scale = pow10(digits as i32);
                let mut first = (self.low * scale).round();
                if first / scale < self.low {
                    first += 1.0;
                }
                let mut last = (self.high * scale).round();
                if last / scale > self.high {
                    last -= 1.0;
                }
                if first > last || first.abs() > 9.0e15 || last.abs() > 9.0e15 {
                    FloatGrid::Empty
                } else {
                    FloatGrid::Decimal {
                        digits,
                        first: first as i64,
                        last: last as i64,
                    }
                }
            }
            (true, None, Some(digits)) if self.low > 0.0 && (1..=MAX_DIGITS).contains(&digits) => {
                let mut lo = Sig::round(self.low, digits);
                if lo.value() < self.low {
                    lo = lo.next_up();
                }
                let mut hi = Sig::round(self.high, digits);
                if hi.value() > self.high {
                    hi = hi.next_down();
                }
                let (first, last) = (lo.value(), hi.value());
                if first > last {
                    FloatGrid::Empty
                } else {
                    FloatGrid::Significant { digits, first, last }
                }
            }
            (_, None, None) => FloatGrid::Interval {
                low: self.low,
                high: self.high,
            },
            _ => FloatGrid::Empty,
        }
    }

    /// Snaps a scalar onto the admissible grid (clipping to the bounds).
    pub fn quantize_scalar(&self, v: f64) -> f64 {
        match self.grid() {
            FloatGrid::Interval { low, high } => v.clamp(low, high),
            FloatGrid::Decimal { digits, first, last } => {
                let scale = pow10(digits as i32);
                let k = (v * scale).round().clamp(first as f64, last as f64);
                k / scale
            }
            FloatGrid::Significant { digits, first, last } => {
                if v <= first {
                    first
                } else if v >= last {
                    last
                } else {
                    Sig::round(v, digits).value().clamp(first, last)
                }
            }
            FloatGrid::Empty => v,
        }
    }

    pub fn contains_scalar(&self, v: f64) -> bool {
        if !v.is_finite() || v < self.low || v > self.high {
            return false;
        }
        match self.grid() {
            FloatGrid::Interval { .. } => true,
            FloatGrid::Empty => false,
            _ => self.quantize_scalar(v) == v,
        }
    }
}

pub(crate) fn pow10(e: i32) -> f64 {
    10f64.powi(e)
}

/// A decimal `mantissa * 10^exp` with a fixed number of significant digits.
#[derive(Debug, Clone, Copy)]
struct Sig {
    mantissa: i64,
    exp: i32,
    digits: u32,
}

impl Sig {
    /// Rounds a positive value to `digits` significant digits, half away from zero.
    fn round(v: f64, digits: u32) -> Self {
        let lo = 10i64.pow(digits - 1);
        let hi = 10i64.pow(digits);
        let mut e = v.log10().floor() as i32;
        for _ in 0..4 {
            let exp = e - digits as i32 + 1;
            let scaled = if exp >= 0 { v / pow10(exp) } else { v * pow10(-exp) };
            let mantissa = scaled.round() as i64;
            if mantissa >= hi {
                e += 1;
            } else if mantissa < lo {
                e -= 1;
            } else {
                return Sig { mantissa, exp, digits };
            }
        }
        // Only reachable for subnormal or otherwise degenerate inputs.
        Sig {
            mantissa: lo,
            exp: e - digits as i32 + 1,
            digits,
        }
    }

    fn value(self) -> f64 {
        if self.exp >= 0 {
            self.mantissa as f64 * pow10(self.exp)
        } else {
            self.mantissa as f64 / pow10(-self.exp)
        }
    }

    fn next_up(self) -> Self {
        let hi = 10i64.pow(self.digits);
        if self.mantissa + 1 >= hi {
            Sig {
                mantissa: hi / 10,
                exp: self.exp + 1,
                ..self
            }
        } else {
            Sig {
                mantissa: self.mantissa + 1,
                ..self
            }
        }
    }

    fn next_down(self) -> Self {
        let lo = 10i64.pow(self.digits - 1);
        if self.mantissa - 1 < lo {
            Sig {
                mantissa: lo * 10 - 1,
                exp: self.exp - 1,
                ..self
            }
        } else {
            Sig {
                mantissa: self.mantissa - 1,
                ..self
            }
        }
    }
}

fn shape_violations(shape: Option<&[usize]>, out: &mut Vec<String>) {
    if let Some(shape) = shape {
        if shape.is_empty() {
            out.push("shape must list at least one dimension".into());
        }
        if shape.contains(&0) {
            out.push("shape dimensions must be positive".into());
        }
    }
}

fn element_count(shape: Option<&[usize]>) -> Option<usize> {
    shape.map(|s| s.iter().product())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceSpec {
    pub options: Vec<serde_json::Value>,
    pub is_ordinal: bool,
}

impl ChoiceSpec {
    pub fn new<I, T>(options: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: Into<serde_json::Value>,
    {
        Self {
            options: options.into_iter().map(Into::into).collect(),
            is_ordinal: false,
        }
    }

    pub fn ordinal(mut self) -> Self {
        self.is_ordinal = true;
        self
    }

    pub fn index_of(&self, value: &serde_json::Value) -> Option<usize> {
        self.options.iter().position(|o| o == value)
    }
}

pub type SeedFn = dyn Fn(&mut Rng) -> serde_json::Value + Send + Sync;
pub type MutateFn = dyn Fn(&serde_json::Value, Temperature, &mut Rng) -> serde_json::Value + Send + Sync;
pub type MembershipFn = dyn Fn(&serde_json::Value) -> bool + Send + Sync;

/// A user-defined parameter type with its own seeding and mutation kernels.
#[derive(Clone)]
pub struct CustomSpec {
    pub seed_fn: Arc<SeedFn>,
    pub mutate_fn: Arc<MutateFn>,
    pub contains_fn: Option<Arc<MembershipFn>>,
}

impl CustomSpec {
    pub fn new<S, M>(seed_fn: S, mutate_fn: M) -> Self
    where
        S: Fn(&mut Rng) -> serde_json::Value + Send + Sync + 'static,
        M: Fn(&serde_json::Value, Temperature, &mut Rng) -> serde_json::Value + Send + Sync + 'static,
    {
        Self {
            seed_fn: Arc::new(seed_fn),
            mutate_fn: Arc::new(mutate_fn),
            contains_fn: None,
        }
    }

    /// Optional membership predicate; without one every value is accepted.
    pub fn with_contains<C>(mut self, contains: C) -> Self
    where
        C: Fn(&serde_json::Value) -> bool + Send + Sync + 'static,
    {
        self.contains_fn = Some(Arc::new(contains));
        self
    }
}

impl fmt::Debug for CustomSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomSpec").finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum ParamSpec {
    Int(IntSpec),
    Float(FloatSpec),
    Choice(ChoiceSpec),
    Custom(CustomSpec),
}

impl From<IntSpec> for ParamSpec {
    fn from(s: IntSpec) -> Self {
        ParamSpec::Int(s)
    }
}

impl From<FloatSpec> for ParamSpec {
    fn from(s: FloatSpec) -> Self {
        ParamSpec::Float(s)
    }
}

impl From<ChoiceSpec> for ParamSpec {
    fn from(s: ChoiceSpec) -> Self {
        ParamSpec::Choice(s)
    }
}

impl From<CustomSpec> for ParamSpec {
    fn from(s: CustomSpec) -> Self {
        ParamSpec::Custom(s)
    }
}

impl ParamSpec {
    pub fn violations(&self) -> Vec<String> {
        match self {
            ParamSpec::Int(s) => s.violations(),
            ParamSpec::Float(s) => s.violations(),
            ParamSpec::Choice(s) if s.options.is_empty() => vec!["options must be non-empty".into()],
            ParamSpec::Choice(_) | ParamSpec::Custom(_) => Vec::new(),
        }
    }

    /// Membership predicate: bounds, quantization grid, option set and shape.
    pub fn contains(&self, value: &Value) -> bool {
        match (self, value) {
            (ParamSpec::Int(s), Value::Int(v)) if s.shape.is_none() => s.contains_scalar(*v),
            (ParamSpec::Int(s), Value::Ints(vs)) => {
                element_count(s.shape.as_deref()) == Some(vs.len()) && vs.iter().all(|&v| s.contains_scalar(v))
            }
            (ParamSpec::Float(s), Value::Float(v)) if s.shape.is_none() => s.contains_scalar(*v),
            (ParamSpec::Float(s), Value::Floats(vs)) => {
                element_count(s.shape.as_deref()) == Some(vs.len()) && vs.iter().all(|&v| s.contains_scalar(v))
            }
            (ParamSpec::Choice(s), Value::Choice(i)) => *i < s.options.len(),
            (ParamSpec::Custom(s), Value::Custom(v)) => s.contains_fn.as_ref().is_none_or(|f| f(v)),
            _ => false,
        }
    }

    /// Projects a value onto the grid. Choice and custom values pass through.
    pub fn quantize(&self, value: &Value) -> Value {
        match (self, value) {
            (ParamSpec::Int(s), Value::Int(v)) => Value::Int(s.quantize_scalar(*v)),
            (ParamSpec::Int(s), Value::Ints(vs)) => Value::Ints(vs.iter().map(|&v| s.quantize_scalar(v)).collect()),
            (ParamSpec::Float(s), Value::Float(v)) => Value::Float(s.quantize_scalar(*v)),
            (ParamSpec::Float(s), Value::Floats(vs)) => {
                Value::Floats(vs.iter().map(|&v| s.quantize_scalar(v)).collect())
            }
            (_, v) => v.clone(),
        }
    }

    /// Renders a value as the plain JSON handed to objectives.
    pub fn to_json(&self, value: &Value) -> serde_json::Value {
        use serde_json::json;
        match (self, value) {
            (_, Value::Int(v)) => json!(v),
            (_, Value::Float(v)) => json!(v),
            (ParamSpec::Int(s), Value::Ints(vs)) => nest(vs, s.shape.as_deref()),
            (ParamSpec::Float(s), Value::Floats(vs)) => nest(vs, s.shape.as_deref()),
            (_, Value::Ints(vs)) => json!(vs),
            (_, Value::Floats(vs)) => json!(vs),
            (ParamSpec::Choice(s), Value::Choice(i)) => s.options.get(*i).cloned().unwrap_or(serde_json::Value::Null),
            (_, Value::Choice(i)) => json!(i),
            (_, Value::Custom(v)) => v.clone(),
        }
    }

    /// Parses the plain JSON form back into a [`Value`] without checking bounds.
    pub fn value_from_json(&self, name: &str, json: &serde_json::Value) -> Result<Value, SpaceError> {
        let mismatch = |expected| SpaceError::TypeMismatch {
            param: name.to_string(),
            expected,
        };
        match self {
            ParamSpec::Int(s) => match &s.shape {
                None => json.as_i64().map(Value::Int).ok_or_else(|| mismatch("an integer")),
                Some(_) => {
                    let mut flat = Vec::new();
                    flatten(json, &mut flat).ok_or_else(|| mismatch("an integer array"))?;
                    flat.iter()
                        .map(|v| v.as_i64())
                        .collect::<Option<Vec<_>>>()
                        .map(Value::Ints)
                        .ok_or_else(|| mismatch("an integer array"))
                }
            },
            ParamSpec::Float(s) => match &s.shape {
                None => json.as_f64().map(Value::Float).ok_or_else(|| mismatch("a number")),
                Some(_) => {
                    let mut flat = Vec::new();
                    flatten(json, &mut flat).ok_or_else(|| mismatch("a numeric array"))?;
                    flat.iter()
                        .map(|v| v.as_f64())
                        .collect::<Option<Vec<_>>>()
                        .map(Value::Floats)
                        .ok_or_else(|| mismatch("a numeric array"))
                }
            },
            ParamSpec::Choice(s) => s
                .index_of(json)
                .map(Value::Choice)
                .ok_or_else(|| SpaceError::OutOfDomain {
                    param: name.to_string(),
                    value: json.to_string(),
                }),
            ParamSpec::Custom(_) => Ok(Value::Custom(json.clone())),
        }
    }

    fn canonical(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            ParamSpec::Int(s) => json!({
                "type": "int", "low": s.low, "high": s.high,
                "multiple_of": s.multiple_of, "power_of": s.power_of, "shape": s.shape,
            }),
            ParamSpec::Float(s) => json!({
                "type": "float", "low": s.low, "high": s.high, "log": s.log,
                "precision": s.precision, "significant_digits": s.significant_digits, "shape": s.shape,
            }),
            ParamSpec::Choice(s) => json!({
                "type": "choice", "options": s.options, "is_ordinal": s.is_ordinal,
            }),
            ParamSpec::Custom(_) => json!({ "type": "custom" }),
        }
    }
}

fn nest<T: Serialize + Copy>(flat: &[T], shape: Option<&[usize]>) -> serde_json::Value {
    fn go<T: Serialize + Copy>(flat: &[T], shape: &[usize]) -> serde_json::Value {
        match shape {
            [] | [_] => serde_json::json!(flat),
            [_, rest @ ..] => {
                let stride: usize = rest.iter().product();
                serde_json::Value::Array(flat.chunks(stride.max(1)).map(|c| go(c, rest)).collect())
            }
        }
    }
    go(flat, shape.unwrap_or(&[]))
}

fn flatten<'a>(json: &'a serde_json::Value, out: &mut Vec<&'a serde_json::Value>) -> Option<()> {
    match json {
        serde_json::Value::Array(items) => {
            for item in items {
                if item.is_array() {
                    flatten(item, out)?;
                } else {
                    out.push(item);
                }
            }
            Some(())
        }
        _ => None,
    }
}

/// Ordered map of parameter name to domain.
#[derive(Debug, Clone, Default)]
pub struct SearchSpace {
    params: IndexMap<String, ParamSpec>,
    duplicates: Vec<String>,
}

impl SearchSpace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter. Re-adding a name replaces it and is reported by
    /// [`validate_space`].
    pub fn add(mut self, name: impl Into<String>, spec: impl Into<ParamSpec>) -> Self {
        self.insert(name, spec);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, spec: impl Into<ParamSpec>) {
        let name = name.into();
        if self.params.insert(name.clone(), spec.into()).is_some() {
            self.duplicates.push(name);
        }
    }

    pub fn get(&self, name: &str) -> Option<&ParamSpec> {
        self.params.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamSpec)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Loads a space from `{"name": {"type": "int"|"float"|"choice", ...}}`.
    pub fn from_json_str(doc: &str) -> Result<Self, SpaceError> {
        let raw: IndexMap<String, ParamDoc> = serde_json::from_str(doc)?;
        let mut space = SearchSpace::new();
        for (name, doc) in raw {
            space.insert(name, doc.into_spec()?);
        }
        Ok(space)
    }

    /// Canonical JSON used for digests; custom parameters contribute only their type.
    pub fn canonical_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.params
                .iter()
                .map(|(name, spec)| serde_json::json!({ "name": name, "spec": spec.canonical() }))
                .collect(),
        )
    }

    /// Hex SHA-256 of [`Self::canonical_json`].
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.canonical_json()).expect("canonical json");
        hex_string(&Sha256::digest(&bytes))
    }

    /// Renders a candidate as the plain configuration record.
    pub fn record(&self, candidate: &Candidate) -> serde_json::Map<String, serde_json::Value> {
        candidate
            .values
            .iter()
            .map(|(name, value)| {
                let json = match self.params.get(name) {
                    Some(spec) => spec.to_json(value),
                    None => serde_json::Value::Null,
                };
                (name.clone(), json)
            })
            .collect()
    }

    /// Checks that `values` has exactly this space's keys and each value is admissible.
    pub fn check_values(&self, values: &IndexMap<String, Value>) -> Result<(), SpaceError> {
        let missing: Vec<String> = self
            .params
            .keys()
            .filter(|k| !values.contains_key(*k))
            .cloned()
            .collect();
        let unexpected: Vec<String> = values
            .keys()
            .filter(|k| !self.params.contains_key(*k))
            .cloned()
            .collect();
        if !missing.is_empty() || !unexpected.is_empty() {
            return Err(SpaceError::KeyMismatch { missing, unexpected });
        }
        for (name, value) in values {
            if !self.params[name].contains(value) {
                return Err(SpaceError::OutOfDomain {
                    param: name.clone(),
                    value: format!("{value:?}"),
                });
            }
        }
        Ok(())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum ParamDoc {
    Int {
        low: i64,
        high: i64,
        #[serde(default)]
        multiple_of: Option<i64>,
        #[serde(default)]
        power_of: Option<i64>,
        #[serde(default)]
        shape: Option<Vec<usize>>,
    },
    Float {
        low: f64,
        high: f64,
        #[serde(default)]
        log: bool,
        #[serde(default)]
        precision: Option<u32>,
        #[serde(default)]
        significant_digits: Option<u32>,
        #[serde(default)]
        shape: Option<Vec<usize>>,
        #[serde(default)]
        format: Option<String>,
    },
    Choice {
        options: Vec<serde_json::Value>,
        #[serde(default)]
        is_ordinal: bool,
    },
}

impl ParamDoc {
    fn into_spec(self) -> Result<ParamSpec, SpaceError> {
        Ok(match self {
            ParamDoc::Int {
                low,
                high,
                multiple_of,
                power_of,
                shape,
            } => ParamSpec::Int(IntSpec {
                low,
                high,
                multiple_of,
                power_of,
                shape,
            }),
            ParamDoc::Float {
                low,
                high,
                log,
                precision,
                significant_digits,
                shape,
                format,
            } => {
                let mut spec = FloatSpec {
                    low,
                    high,
                    log,
                    precision,
                    significant_digits,
                    shape,
                };
                if let Some(fmt) = format {
                    let q = parse_format(&fmt)?;
                    match q.mode {
                        QuantMode::Linear => spec.precision = Some(q.digits),
                        QuantMode::Log => {
                            spec.log = true;
                            spec.significant_digits = Some(q.digits);
                        }
                    }
                }
                ParamSpec::Float(spec)
            }
            ParamDoc::Choice { options, is_ordinal } => ParamSpec::Choice(ChoiceSpec { options, is_ordinal }),
        })
    }
}

/// Every invariant violation in the space, in parameter order.
pub fn validate_space(space: &SearchSpace) -> Vec<Violation> {
    let mut out = Vec::new();
    for name in &space.duplicates {
        out.push(Violation {
            param: name.clone(),
            message: "duplicate parameter name".into(),
        });
    }
    for (name, spec) in &space.params {
        if name.is_empty() {
            out.push(Violation {
                param: name.clone(),
                message: "parameter names must be non-empty".into(),
            });
        }
        out.extend(spec.violations().into_iter().map(|message| Violation {
            param: name.clone(),
            message,
        }));
    }
    out
}

/// Membership predicate; see [`ParamSpec::contains`].
pub fn contains(spec: &ParamSpec, value: &Value) -> bool {
    spec.contains(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Random,
    Local,
    Queued,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Random => "random",
            Origin::Local => "local",
            Origin::Queued => "queued",
        })
    }
}

/// One concrete configuration. The id is assigned when the engine issues it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u64,
    pub origin: Origin,
    pub values: IndexMap<String, Value>,
}

impl Candidate {
    /// Builds a candidate after checking it against `space`.
    pub fn new(
        space: &SearchSpace,
        id: u64,
        origin: Origin,
        values: IndexMap<String, Value>,
    ) -> Result<Self, SpaceError> {
        space.check_values(&values)?;
        Ok(Self { id, origin, values })
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }
}
