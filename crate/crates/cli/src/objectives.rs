//! Synthetic objectives for exercising the optimizer.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use hopper_core::sampling::Rng;
use hopper_core::{Config, Direction, FloatSpec, ObjectiveError, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Sphere,
    Rosenbrock,
    Rastrigin,
    Multimodal2d,
    NoisySphere,
}

impl Kind {
    pub const ALL: [Kind; 5] = [
        Kind::Sphere,
        Kind::Rosenbrock,
        Kind::Rastrigin,
        Kind::Multimodal2d,
        Kind::NoisySphere,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Sphere => "sphere",
            Kind::Rosenbrock => "rosenbrock",
            Kind::Rastrigin => "rastrigin",
            Kind::Multimodal2d => "multimodal2d",
            Kind::NoisySphere => "noisy_sphere",
        }
    }

    /// Box bounds shared by every coordinate.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Kind::Sphere | Kind::NoisySphere => (-1.0, 1.0),
            Kind::Rastrigin => (-5.12, 5.12),
            Kind::Rosenbrock => (-2.048, 2.048),
            Kind::Multimodal2d => (0.0, 1.0),
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            Kind::Multimodal2d => Direction::Maximize,
            _ => Direction::Minimize,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s || (s == "noisy-sphere" && *k == Kind::NoisySphere))
            .ok_or_else(|| {
                let names: Vec<_> = Kind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown objective {s:?}; expected one of {}", names.join(", "))
            })
    }
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

pub fn rastrigin(x: &[f64]) -> f64 {
    10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
}

/// (height, centre x, centre y, width)
pub const BUMPS: [(f64, f64, f64, f64); 3] = [(1.0, 0.72, 0.28, 0.1), (0.8, 0.22, 0.68, 0.1), (0.6, 0.78, 0.82, 0.1)];
pub const TILT: f64 = 0.1;

/// Three Gaussian bumps on a gently tilted plane over the unit square.
pub fn multimodal2d(x: f64, y: f64) -> f64 {
    let bumps: f64 = BUMPS
        .iter()
        .map(|&(h, cx, cy, w)| h * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * w * w)).exp())
        .sum();
    bumps + TILT * (x + y) / 2.0
}

/// Maximum of [`multimodal2d`] over a `(n+1) x (n+1)` grid on the unit square.
pub fn multimodal2d_grid_optimum(n: usize) -> (f64, f64, f64) {
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..=n {
        for j in 0..=n {
            let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
            let v = multimodal2d(x, y);
            if v > best.0 {
                best = (v, x, y);
            }
        }
    }
    best
}

/// Grid optimum at resolution 1/4000, stored so tests need not recompute it.
pub const MULTIMODAL2D_OPTIMUM: f64 = 1.0500252417342952;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Builtin {
    pub kind: Kind,
    pub dims: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Per-coordinate box, defaults to [`Kind::bounds`].
    pub bounds: (f64, f64),
}

impl Builtin {
    pub fn new(kind: Kind, dims: usize) -> Self {
        Self {
            kind,
            dims,
            noise_sigma: 0.1,
            seed: 0,
            bounds: kind.bounds(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.dims == 0 {
            return Err("--dims must be at least 1".into());
        }
        if self.kind == Kind::Multimodal2d && self.dims != 2 {
            return Err(format!("multimodal2d is two-dimensional, got --dims {}", self.dims));
        }
        if self.kind == Kind::Rosenbrock && self.dims < 2 {
            return Err("rosenbrock needs --dims of at least 2".into());
        }
        let (lo, hi) = self.bounds;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(format!("invalid bounds [{lo}, {hi}]"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(format!(
                "--noise-sigma must be finite and non-negative, got {}",
                self.noise_sigma
            ));
        }
        Ok(())
    }

    /// Coordinate names, zero-padded so they sort numerically.
    pub fn param_names(&self) -> Vec<String> {
        let width = (self.dims - 1).max(1).to_string().len();
        (0..self.dims).map(|i| format!("x{i:0width$}")).collect()
    }

    pub fn space(&self) -> SearchSpace {
        let (lo, hi) = self.bounds;
        let mut space = SearchSpace::new();
        for name in self.param_names() {
            space.insert(name, FloatSpec::new(lo, hi));
        }
        space
    }

    /// Known optimal value.
    pub fn optimum(&self) -> f64 {
        match self.kind {
            Kind::Multimodal2d => MULTIMODAL2D_OPTIMUM,
            _ => 0.0,
        }
    }

    /// Noise-free value at `x`.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        match self.kind {
            Kind::Sphere | Kind::NoisySphere => sphere(x),
            Kind::Rosenbrock => rosenbrock(x),
            Kind::Rastrigin => rastrigin(x),
            Kind::Multimodal2d => multimodal2d(x[0], x[1]),
        }
    }

    /// Observation noise for one evaluation, a pure function of
    /// `(seed, trial id, repeat)`.
    pub fn noise(&self, trial: u64, repeat: usize) -> f64 {
        if self.kind != Kind::NoisySphere || self.noise_sigma == 0.0 {
            return 0.0;
        }
        let key = mix(mix(mix(self.seed) ^ trial) ^ repeat as u64);
        self.noise_sigma * Rng::new(key).normal()
    }

    pub fn evaluate_point(&self, x: &[f64], trial: u64, repeat: usize) -> Result<f64, ObjectiveError> {
        if x.len() != self.dims {
            return Err(ObjectiveError::new(format!(
                "{} expects {} coordinates, got {}",
                self.kind,
                self.dims,
                x.len()
            )));
        }
        Ok(self.value_at(x) + self.noise(trial, repeat))
    }

    /// Reads coordinates by name from the builtin's own space.
    pub fn evaluate(&self, config: &Config) -> Result<f64, ObjectiveError> {
        let x = self
            .param_names()
            .iter()
            .map(|n| {
                config
                    .f64(n)
                    .ok_or_else(|| ObjectiveError::new(format!("missing numeric parameter {n}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.evaluate_point(&x, config.trial.id, config.trial.repeat)
    }
}

/// Flattens every numeric parameter of `config` in record order.
pub fn numeric_vector(config: &Config) -> Result<Vec<f64>, ObjectiveError> {
    let mut out = Vec::new();
    for name in config.params.keys() {
        let v = config
            .f64s(name)
            .ok_or_else(|| ObjectiveError::new(format!("parameter {name} is not numeric")))?;
        out.extend(v);
    }
    Ok(out)
}
