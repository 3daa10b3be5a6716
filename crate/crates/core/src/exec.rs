//! Worker-count resolution and the issue/settle evaluation loop.
//!
//! The controller thread does all sampling, bookkeeping and callbacks;
//! workers only run the objective. A panicking objective counts as a
//! worker crash: the candidate is recorded as failed and the worker keeps
//! serving (it is "restarted" in place).

use std::any::Any;
use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::thread;

use chrono::Utc;
use crossbeam_channel::{bounded, unbounded};
use log::{debug, warn};
use thiserror::Error;

use crate::engine::{Controller, EngineError, Evaluation, Settlement, Task};
use crate::objective::{Config, ObjectiveError, DEVICE_ENV};
use crate::pruning::{evaluate_repeated, RepeatedObjective};

pub type ObjectiveFn<'f> = dyn Fn(&Config) -> Result<f64, ObjectiveError> + Sync + 'f;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("invalid worker count {0:?}: expected a positive integer, \"auto\", \"per-gpu\" or \"<N>x per-gpu\"")]
    InvalidWorkers(String),
    #[error("\"{0}\" requested but no accelerator is visible ({DEVICE_ENV} unset or empty and no device found)")]
    NoDevices(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerSpec {
    pub raw: String,
    pub resolved: usize,
    /// One device id per worker.
    pub device_bindings: Option<Vec<String>>,
}

impl WorkerSpec {
    pub fn count(n: usize) -> Result<Self, ExecError> {
        if n == 0 {
            return Err(ExecError::InvalidWorkers(n.to_string()));
        }
        Ok(Self {
            raw: n.to_string(),
            resolved: n,
            device_bindings: None,
        })
    }
}

/// Lists accelerators via `nvidia-smi -L`; empty when unavailable.
pub fn query_devices() -> Vec<String> {
    match Command::new("nvidia-smi").arg("-L").output() {
        Ok(out) if out.status.success() => String::from_utf8_lossy(&out.stdout)
            .lines()
            .filter(|l| l.starts_with("GPU "))
            .enumerate()
            .map(|(i, _)| i.to_string())
            .collect(),
        _ => Vec::new(),
    }
}

/// Resolves a worker argument using the process's device query.
pub fn resolve_workers(raw: &str, env: &HashMap<String, String>) -> Result<WorkerSpec, ExecError> {
    resolve_workers_with(raw, env, query_devices)
}

/// Accepts a positive integer, `"auto"` (logical CPUs), `"per-gpu"` or
/// `"<N>x per-gpu"`. Devices come from `CUDA_VISIBLE_DEVICES` in `env`,
/// falling back to `query` when the variable is unset.
pub fn resolve_workers_with<Q>(raw: &str, env: &HashMap<String, String>, query: Q) -> Result<WorkerSpec, ExecError>
where
    Q: FnOnce() -> Vec<String>,
{
    let text = raw.trim();
    let lower = text.to_ascii_lowercase();
    let invalid = || ExecError::InvalidWorkers(raw.to_string());

    if lower == "auto" {
        let n = thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        return Ok(WorkerSpec {
            raw: raw.to_string(),
            resolved: n,
            device_bindings: None,
        });
    }

    let per_device = if lower == "per-gpu" {
        Some(1)
    } else if let Some(prefix) = lower.strip_suffix("per-gpu") {
        let n = prefix
            .trim()
            .strip_suffix('x')
            .and_then(|n| n.trim().parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .ok_or_else(invalid)?;
        Some(n)
    } else {
        None
    };

    match per_device {
        Some(per) => {
            let devices: Vec<String> = match env.get(DEVICE_ENV) {
                Some(list) => list
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect(),
                None => query(),
            };
            if devices.is_empty() {
                return Err(ExecError::NoDevices(raw.to_string()));
            }
            let bindings: Vec<String> = devices
                .iter()
                .flat_map(|d| std::iter::repeat_n(d.clone(), per))
                .collect();
            Ok(WorkerSpec {
                raw: raw.to_string(),
                resolved: bindings.len(),
                device_bindings: Some(bindings),
            })
        }
        None => {
            let n: i64 = text.parse().map_err(|_| invalid())?;
            if n < 1 {
                return Err(invalid());
            }
            WorkerSpec::count(n as usize).map(|mut w| {
                w.raw = raw.to_string();
                w
            })
        }
    }
}

fn panic_message(payload: &(dyn Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".to_string())
}

/// Evaluates one task on the current thread, converting panics into a
/// crashed settlement.
pub fn evaluate_task(objective: &ObjectiveFn<'_>, task: &Task, device: Option<&str>) -> Settlement {
    let mut config = task.config.clone();
    config.trial.device = device.map(String::from);
    let mut pruner = task.pruner.clone();
    let started_at = Utc::now();
    let result = catch_unwind(AssertUnwindSafe(|| {
        let repeated = RepeatedObjective::new(objective, task.repeats.max(1)).expect("repeats >= 1");
        evaluate_repeated(&repeated, &config, pruner.as_mut(), task.direction)
    }));
    let ended_at = Utc::now();
    let (evaluation, crashed) = match result {
        Ok(e) => (e, false),
        Err(payload) => {
            let msg = panic_message(payload.as_ref());
            warn!("worker crashed on candidate {}: {msg}", task.id);
            (Evaluation::failed(format!("worker crashed: {msg}"), Vec::new()), true)
        }
    };
    Settlement {
        id: task.id,
        evaluation,
        started_at,
        ended_at,
        crashed,
    }
}

fn abort(controller: &mut Controller<'_>, err: EngineError) -> EngineError {
    if let Err(flush_err) = controller.flush() {
        warn!("checkpoint flush during abort failed: {flush_err}");
    }
    err
}

/// Evaluates candidates one at a time on the calling thread.
pub fn run_sequential(
    controller: &mut Controller<'_>,
    objective: &ObjectiveFn<'_>,
    device: Option<&str>,
) -> Result<(), EngineError> {
    let step = |controller: &mut Controller<'_>| -> Result<bool, EngineError> {
        match controller.next_task()? {
            Some(task) => {
                let settlement = evaluate_task(objective, &task, device);
                controller.settle(settlement)?;
                Ok(true)
            }
            None => Ok(false),
        }
    };
    if let Err(e) = controller.start() {
        return Err(abort(controller, e));
    }
    loop {
        match step(controller) {
            Ok(true) => continue,
            Ok(false) => return Ok(()),
            Err(e) => return Err(abort(controller, e)),
        }
    }
}

/// Keeps up to `workers.resolved` evaluations in flight, settling results
/// in completion order. Each worker evaluates with its own device binding.
pub fn run_parallel(
    controller: &mut Controller<'_>,
    objective: &ObjectiveFn<'_>,
    workers: &WorkerSpec,
) -> Result<(), EngineError> {
    let n = workers.resolved.max(1);
    if let Err(e) = controller.start() {
        return Err(abort(controller, e));
    }
    let (task_tx, task_rx) = bounded::<Task>(n);
    let (result_tx, result_rx) = unbounded::<Settlement>();

    thread::scope(|scope| {
        for w in 0..n {
            let task_rx = task_rx.clone();
            let result_tx = result_tx.clone();
            let device = workers.device_bindings.as_ref().and_then(|b| b.get(w).cloned());
            scope.spawn(move || {
                for task in task_rx.iter() {
                    let settlement = evaluate_task(objective, &task, device.as_deref());
                    if result_tx.send(settlement).is_err() {
                        break;
                    }
                }
                debug!("worker {w} exiting");
            });
        }
        drop(result_tx);

        let mut in_flight = 0usize;
        let mut failure: Option<EngineError> = None;
        loop {
            while failure.is_none() && in_flight < n {
                match controller.next_task() {
                    Ok(Some(task)) => {
                        task_tx.send(task).expect("workers alive while tasks pending");
                        in_flight += 1;
                    }
                    Ok(None) => break,
                    Err(e) => failure = Some(e),
                }
            }
            if in_flight == 0 {
                break;
            }
            let settlement = result_rx.recv().expect("a worker holds each in-flight task");
            in_flight -= 1;
            if failure.is_none() {
                if let Err(e) = controller.settle(settlement) {
                    failure = Some(e);
                }
            }
        }
        drop(task_tx);
        match failure {
            Some(e) => Err(abort(controller, e)),
            None => Ok(()),
        }
    })
}
