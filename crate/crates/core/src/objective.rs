//! The configuration record handed to objective functions.
//!
//! Objectives never see engine types: they receive a [`Config`], a plain
//! JSON map of parameter values plus a little trial metadata.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable that restricts accelerator visibility per worker.
pub const DEVICE_ENV: &str = "CUDA_VISIBLE_DEVICES";

/// Error returned by an objective; the evaluation is recorded as failed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct ObjectiveError(pub String);

impl ObjectiveError {
    pub fn new(msg: impl std::fmt::Display) -> Self {
        Self(msg.to_string())
    }
}

impl From<String> for ObjectiveError {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl From<&str> for ObjectiveError {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

pub type ObjectiveResult = Result<f64, ObjectiveError>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialInfo {
    pub id: u64,
    /// Zero-based repetition index when an objective is evaluated several times.
    pub repeat: usize,
    /// Accelerator id bound to the evaluating worker, if any.
    pub device: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub params: serde_json::Map<String, serde_json::Value>,
    pub trial: TrialInfo,
}

impl Config {
    pub fn new(params: serde_json::Map<String, serde_json::Value>) -> Self {
        Self {
            params,
            trial: TrialInfo::default(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&serde_json::Value> {
        self.params.get(name)
    }

    pub fn f64(&self, name: &str) -> Option<f64> {
        self.get(name)?.as_f64()
    }

    pub fn i64(&self, name: &str) -> Option<i64> {
        self.get(name)?.as_i64()
    }

    pub fn str(&self, name: &str) -> Option<&str> {
        self.get(name)?.as_str()
    }

    /// Numeric array value, flattened in row-major order.
    pub fn f64s(&self, name: &str) -> Option<Vec<f64>> {
        fn walk(v: &serde_json::Value, out: &mut Vec<f64>) -> Option<()> {
            match v {
                serde_json::Value::Array(items) => items.iter().try_for_each(|i| walk(i, out)),
                other => {
                    out.push(other.as_f64()?);
                    Some(())
                }
            }
        }
        let mut out = Vec::new();
        walk(self.get(name)?, &mut out)?;
        Some(out)
    }

    /// Variables a subprocess-launching objective should export, e.g.
    /// `Command::new(..).envs(config.worker_env())`.
    pub fn worker_env(&self) -> Vec<(&'static str, String)> {
        self.trial.device.iter().map(|d| (DEVICE_ENV, d.clone())).collect()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.params).expect("config params are plain json")
    }
}
