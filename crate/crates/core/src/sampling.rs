//! Uniform seeding over the space and temperature-scaled local perturbation.
//!
//! Noise kernels (all clipped to the parameter's grid):
//!
//! | parameter          | perturbation                                          |
//! |--------------------|-------------------------------------------------------|
//! | linear float / int | `v + N(0, (0.2·τ·(high−low))²)`                       |
//! | log float          | `exp(ln v + N(0, (0.2·τ·(ln high − ln low))²))`       |
//! | power-of int       | exponent `+ round(N(0, (τ·K/4)²))`, K grid exponents  |
//! | ordinal choice     | index `+ round(N(0, (τ·n/4)²))`                       |
//! | unordered choice   | resample uniformly with probability τ                 |

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::space::{
    exponent_of, pow10, Candidate, ChoiceSpec, FloatGrid, FloatSpec, IntGrid, IntSpec, Origin, ParamSpec, SearchSpace,
    Value,
};

/// Seeded ChaCha8 stream. Its position is a plain word counter, so the
/// full state is `(seed, word_pos)`.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

/// Serializable position of an [`Rng`]; `word_pos` is a decimal string
/// because it is a 128-bit counter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: String,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            word_pos: self.inner.get_word_pos().to_string(),
        }
    }

    pub fn from_state(state: &RngState) -> Result<Self, std::num::ParseIntError> {
        let pos: u128 = state.word_pos.parse()?;
        let mut rng = Self::new(state.seed);
        rng.inner.set_word_pos(pos);
        Ok(rng)
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.sample(StandardNormal)
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Annealing temperature in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Temperature(f64);

impl Temperature {
    pub const HOT: Temperature = Temperature(1.0);
    pub const FROZEN: Temperature = Temperature(0.0);

    /// Clamps into `[0, 1]`; NaN maps to 0.
    pub fn new(tau: f64) -> Self {
        if tau.is_nan() {
            Self(0.0)
        } else {
            Self(tau.clamp(0.0, 1.0))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Relative width of the linear and log Gaussian kernels at τ = 1.
pub const NOISE_SCALE: f64 = 0.2;

fn round_step(rng: &mut Rng, sd: f64) -> i64 {
    (rng.normal() * sd).round() as i64
}

fn sample_int(spec: &IntSpec, rng: &mut Rng) -> i64 {
    match spec.grid() {
        IntGrid::Range { low, high } => rng.random_range(low..=high),
        IntGrid::Multiple { step, first, last } => rng.random_range(first / step..=last / step) * step,
        IntGrid::Power { base, min_exp, max_exp } => base.pow(rng.random_range(min_exp..=max_exp)),
        IntGrid::Empty => spec.low,
    }
}

fn mutate_int(spec: &IntSpec, v: i64, tau: f64, rng: &mut Rng) -> i64 {
    match spec.grid() {
        IntGrid::Power { base, min_exp, max_exp } => {
            let k = exponent_of(spec, v).unwrap_or(min_exp) as i64;
            let count = (max_exp - min_exp + 1) as f64;
            let step = round_step(rng, tau * count / 4.0);
            let k = (k + step).clamp(min_exp as i64, max_exp as i64);
            base.pow(k as u32)
        }
        IntGrid::Empty => v,
        _ => {
            let sd = NOISE_SCALE * tau * (spec.high as f64 - spec.low as f64);
            let moved = (v as f64 + rng.normal() * sd).round();
            let moved = moved.clamp(spec.low as f64, spec.high as f64) as i64;
            spec.quantize_scalar(moved)
        }
    }
}

fn sample_float(spec: &FloatSpec, rng: &mut Rng) -> f64 {
    match spec.grid() {
        FloatGrid::Decimal { digits, first, last } => rng.random_range(first..=last) as f64 / pow10(digits as i32),
        FloatGrid::Empty => spec.low,
        _ => {
            let u: f64 = rng.random();
            let raw = if spec.log {
                let (a, b) = (spec.low.ln(), spec.high.ln());
                (a + u * (b - a)).exp()
            } else {
                spec.low + u * (spec.high - spec.low)
            };
            spec.quantize_scalar(raw.clamp(spec.low, spec.high))
        }
    }
}

fn mutate_float(spec: &FloatSpec, v: f64, tau: f64, rng: &mut Rng) -> f64 {
    let z = rng.normal();
    let raw = if spec.log {
        let sd = NOISE_SCALE * tau * (spec.high.ln() - spec.low.ln());
        (v.ln() + z * sd).exp()
    } else {
        let sd = NOISE_SCALE * tau * (spec.high - spec.low);
        v + z * sd
    };
    let raw = if raw.is_nan() { v } else { raw };
    spec.quantize_scalar(raw.clamp(spec.low, spec.high))
}

fn mutate_choice(spec: &ChoiceSpec, index: usize, tau: f64, rng: &mut Rng) -> usize {
    let n = spec.options.len();
    if n == 0 {
        return index;
    }
    if spec.is_ordinal {
        let step = round_step(rng, tau * n as f64 / 4.0);
        (index as i64 + step).clamp(0, n as i64 - 1) as usize
    } else if rng.random::<f64>() < tau {
        rng.random_range(0..n)
    } else {
        index
    }
}

fn element_count(shape: &Option<Vec<usize>>) -> Option<usize> {
    shape.as_ref().map(|s| s.iter().product())
}

/// Draws one value uniformly from the spec's domain.
pub fn sample(spec: &ParamSpec, rng: &mut Rng) -> Value {
    match spec {
        ParamSpec::Int(s) => match element_count(&s.shape) {
            None => Value::Int(sample_int(s, rng)),
            Some(n) => Value::Ints((0..n).map(|_| sample_int(s, rng)).collect()),
        },
        ParamSpec::Float(s) => match element_count(&s.shape) {
            None => Value::Float(sample_float(s, rng)),
            Some(n) => Value::Floats((0..n).map(|_| sample_float(s, rng)).collect()),
        },
        ParamSpec::Choice(s) => Value::Choice(rng.random_range(0..s.options.len().max(1))),
        ParamSpec::Custom(s) => Value::Custom((s.seed_fn)(rng)),
    }
}

/// Perturbs `value` with noise scaled by `tau`. Values of the wrong kind
/// for the spec are replaced by a fresh sample.
pub fn mutate(spec: &ParamSpec, value: &Value, tau: Temperature, rng: &mut Rng) -> Value {
    let t = tau.get();
    match (spec, value) {
        (ParamSpec::Int(s), Value::Int(v)) => Value::Int(mutate_int(s, *v, t, rng)),
        (ParamSpec::Int(s), Value::Ints(vs)) => Value::Ints(vs.iter().map(|&v| mutate_int(s, v, t, rng)).collect()),
        (ParamSpec::Float(s), Value::Float(v)) => Value::Float(mutate_float(s, *v, t, rng)),
        (ParamSpec::Float(s), Value::Floats(vs)) => {
            Value::Floats(vs.iter().map(|&v| mutate_float(s, v, t, rng)).collect())
        }
        (ParamSpec::Choice(s), Value::Choice(i)) => Value::Choice(mutate_choice(s, *i, t, rng)),
        (ParamSpec::Custom(s), Value::Custom(v)) => Value::Custom((s.mutate_fn)(v, tau, rng)),
        _ => sample(spec, rng),
    }
}

/// Independent uniform draw for every parameter. The returned id is 0
/// until the engine issues the candidate.
pub fn sample_candidate(space: &SearchSpace, rng: &mut Rng) -> Candidate {
    Candidate {
        id: 0,
        origin: Origin::Random,
        values: space
            .iter()
            .map(|(name, spec)| (name.to_string(), sample(spec, rng)))
            .collect(),
    }
}

/// Probability that a single parameter is selected for perturbation.
pub fn selection_probability(tau: Temperature, params: usize) -> f64 {
    if params == 0 {
        0.0
    } else {
        tau.get().max(1.0 / params as f64)
    }
}

/// Perturbs a non-empty random subset of `best`'s parameters.
///
/// Each parameter is selected independently with probability
/// `max(τ, 1/P)`; an empty selection is redrawn.
pub fn mutate_candidate(space: &SearchSpace, best: &Candidate, tau: Temperature, rng: &mut Rng) -> Candidate {
    let n = space.len();
    let p = selection_probability(tau, n);
    let mut selected = vec![false; n];
    if n > 0 {
        loop {
            for s in selected.iter_mut() {
                *s = rng.random::<f64>() < p;
            }
            if selected.iter().any(|&s| s) {
                break;
            }
        }
    }
    let values = space
        .iter()
        .zip(selected)
        .map(|((name, spec), chosen)| {
            let current = best.values.get(name);
            let value = match current {
                Some(v) if chosen => mutate(spec, v, tau, rng),
                Some(v) => v.clone(),
                None => sample(spec, rng),
            };
            (name.to_string(), value)
        })
        .collect();
    Candidate {
        id: 0,
        origin: Origin::Local,
        values,
    }
}
