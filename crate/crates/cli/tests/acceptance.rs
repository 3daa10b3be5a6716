//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use hopper_cli::compare::{best_of, compare, CompareSettings};
use hopper_cli::objectives::{Builtin, Kind};
use hopper_core::engine::{temperature_at, Evaluation, SearchState};
use hopper_core::exec::{resolve_workers, run_parallel, run_sequential};
use hopper_core::pruning::QuantilePruner;
use hopper_core::sampling::{mutate, sample, Rng, Temperature};
use hopper_core::space::{contains, ChoiceSpec, FloatSpec, IntSpec, ParamSpec, Value};
use hopper_core::util::parse_duration;
use hopper_core::{
    run, Budget, BudgetKind, Callback, CallbackError, Config, Direction, EvaluationRecord, ObjectiveError, Origin,
    RunOptions, SearchSpace, WorkerSpec,
};
use rand_core::RngCore;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

/// Uniform draw in [0, 1) from the top 53 bits.
fn unit(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let rows: Vec<(&str, ParamSpec)> = vec![
        ("int(100,500)", IntSpec::new(100, 500).into()),
        ("int multiple_of=100", IntSpec::new(100, 500).multiple_of(100).into()),
        ("int shape=3", IntSpec::new(0, 10).shape([3]).into()),
        ("int power_of=2", IntSpec::new(2, 64).power_of(2).into()),
        ("float(0,1)", FloatSpec::new(0.0, 1.0).into()),
        ("float precision=1", FloatSpec::new(0.0, 1.0).precision(1).into()),
        (
            "float \"0.1f\"",
            FloatSpec::with_format(0.0, 1.0, "0.1f").unwrap().into(),
        ),
        ("float shape=2", FloatSpec::new(-10.0, 10.0).shape([2]).into()),
        ("float log", FloatSpec::new(1e-5, 1e-3).log().into()),
        (
            "float log 1 digit",
            FloatSpec::new(1e-5, 1e-3).log().significant_digits(1).into(),
        ),
        (
            "float \"0.1g\"",
            FloatSpec::with_format(1e-5, 1e-3, "0.1g").unwrap().into(),
        ),
        ("choice unordered", ChoiceSpec::new(["adam", "sgd", "rmsprop"]).into()),
        ("choice ordinal", ChoiceSpec::new([1, 10, 100]).ordinal().into()),
    ];
    let n = 100_000;
    for (i, (name, spec)) in rows.iter().enumerate() {
        let mut rng = Rng::new(i as u64);
        let mut v = sample(spec, &mut rng);
        let mut bad = 0;
        for _ in 0..n {
            if !contains(spec, &sample(spec, &mut rng)) {
                bad += 1;
            }
        }
        for _ in 0..n {
            let tau = Temperature::new(unit(&mut rng));
            v = mutate(spec, &v, tau, &mut rng);
            if !contains(spec, &v) {
                bad += 1;
            }
        }
        ensure(bad == 0, || format!("{name}: {bad} violations"))?;
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "{} rows x ({n} samples + {n} mutations), 0 violations, {:.1?}",
        rows.len(),
        start.elapsed()
    ))
}

fn float_samples(spec: &ParamSpec, seed: u64, n: usize) -> Vec<f64> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|_| match sample(spec, &mut rng) {
            Value::Float(v) => v,
            other => panic!("unexpected {other:?}"),
        })
        .collect()
}

fn criterion_2() -> Check {
    let n = 100_000;
    let lin = float_samples(&FloatSpec::new(1e-5, 1e-1).into(), 21, n);
    let above = lin.iter().filter(|&&x| x > 5e-2).count() as f64 / n as f64;
    ensure((above - 0.5).abs() <= 0.01, || format!("linear P(x > 0.05) = {above}"))?;
    let log = float_samples(&FloatSpec::new(1e-5, 1e-1).log().into(), 22, n);
    let mut decades = Vec::new();
    for w in [1e-5, 1e-4, 1e-3, 1e-2, 1e-1].windows(2) {
        let frac = log.iter().filter(|&&x| x >= w[0] && x < w[1]).count() as f64 / n as f64;
        ensure((frac - 0.25).abs() <= 0.02, || {
            format!("log decade [{}, {}) holds {frac}", w[0], w[1])
        })?;
        decades.push(format!("{frac:.3}"));
    }
    Ok(format!(
        "linear P(x>0.05) = {above:.4}; log decades {}",
        decades.join(" ")
    ))
}

fn criterion_3() -> Check {
    let space = SearchSpace::new().add("x", FloatSpec::new(0.0, 1.0));
    let result = run(
        space,
        |c: &Config| Ok(c.f64("x").unwrap()),
        Direction::Maximize,
        Budget::steps(100),
        RunOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let first_local = result
        .history
        .iter()
        .position(|r| r.candidate.origin == Origin::Local)
        .ok_or("no local candidates")?;
    let random = result
        .history
        .iter()
        .filter(|r| r.candidate.origin == Origin::Random)
        .count();
    ensure(first_local == 25 && random == 25, || {
        format!("{random} random candidates, first local at index {first_local}")
    })?;
    let mut taus = Vec::new();
    for (consumed, want) in [(25.0, 1.0), (62.5, 0.5), (100.0, 0.05)] {
        let b = Budget {
            kind: BudgetKind::Steps,
            total: 100.0,
            consumed,
        };
        let tau = temperature_at(&b, 0.25).get();
        ensure((tau - want).abs() <= 1e-12, || {
            format!("tau at {consumed} = {tau}, expected {want}")
        })?;
        taus.push(format!("{tau}"));
    }
    Ok(format!("25 random then local; tau at 25/62.5/100 = {}", taus.join("/")))
}

fn criterion_4() -> Check {
    let sequences = 10_000;
    let space = SearchSpace::new().add("x", FloatSpec::new(0.0, 1.0));
    let mut gen = Rng::new(404);
    let mut improvements = 0usize;
    let mut ties = 0usize;
    for s in 0..sequences {
        let maximize = unit(&mut gen) < 0.5;
        let direction = if maximize {
            Direction::Maximize
        } else {
            Direction::Minimize
        };
        let len = 1 + (unit(&mut gen) * 30.0) as usize;
        let mut state = SearchState::new(space.clone(), direction, Budget::steps(len as u64), s, 0.25)
            .map_err(|e| e.to_string())?;
        let mut oracle: Option<(u64, f64)> = None;
        for _ in 0..len {
            let c = state.suggest_next();
            let roll = unit(&mut gen);
            // coarse values make ties frequent
            let value = (unit(&mut gen) * 6.0).floor() - 3.0;
            let eval = if roll < 0.8 {
                Evaluation::from(value)
            } else if roll < 0.9 {
                Evaluation::failed("x", vec![])
            } else {
                Evaluation::from(f64::NAN)
            };
            let now = chrono::Utc::now();
            let summary = state.report(c.id, eval, now, now).map_err(|e| e.to_string())?;
            let expected_new = roll < 0.8
                && match oracle {
                    None => true,
                    Some((_, b)) => {
                        if value == b {
                            ties += 1;
                        }
                        if maximize {
                            value > b
                        } else {
                            value < b
                        }
                    }
                };
            if expected_new {
                oracle = Some((c.id, value));
                improvements += 1;
            }
            let got = state.best().map(|b| (b.candidate.id, b.value));
            ensure(summary.new_best == expected_new && got == oracle, || {
                format!("sequence {s}: incumbent {got:?}, oracle {oracle:?}")
            })?;
        }
    }
    Ok(format!(
        "{sequences} sequences, {improvements} improvements, {ties} ties kept the earlier incumbent"
    ))
}

fn criterion_5() -> Check {
    let mut p = QuantilePruner::new(0.2).map_err(|e| e.to_string())?;
    for v in 1..=10 {
        p.observe(0, f64::from(v));
    }
    let t = p.threshold(0, Direction::Maximize).ok_or("no threshold")?;
    ensure((t - 8.2).abs() < 1e-12, || format!("threshold {t}"))?;
    ensure(p.should_prune(0, &[5.0], Direction::Maximize), || "value 5 kept".into())?;
    ensure(!p.should_prune(0, &[10.0], Direction::Maximize), || {
        "value 10 pruned".into()
    })?;
    for n in 0..5 {
        let mut warm = QuantilePruner::new(0.2).map_err(|e| e.to_string())?;
        for v in 1..=n {
            warm.observe(0, f64::from(v));
        }
        ensure(!warm.should_prune(0, &[-1e12], Direction::Maximize), || {
            format!("pruned with {n} observations")
        })?;
    }
    Ok("threshold 8.2, 5 pruned, 10 kept, no pruning below 5 observations".into())
}

struct StopAfter(usize, usize);

impl Callback for StopAfter {
    fn on_evaluated(&mut self, _: &EvaluationRecord) -> Result<(), CallbackError> {
        self.1 += 1;
        if self.1 >= self.0 {
            Err("interrupt".into())
        } else {
            Ok(())
        }
    }
}

fn resume_space() -> SearchSpace {
    SearchSpace::new()
        .add("lr", FloatSpec::new(1e-5, 1e-1).log())
        .add("units", IntSpec::new(16, 256).multiple_of(16))
        .add("act", ChoiceSpec::new(["relu", "tanh", "gelu"]))
        .add("drop", FloatSpec::new(0.0, 0.5).precision(2))
}

fn resume_objective(c: &Config) -> Result<f64, ObjectiveError> {
    let lr = c.f64("lr").unwrap();
    let units = c.i64("units").unwrap() as f64;
    let act = match c.str("act") {
        Some("gelu") => 0.2,
        Some("tanh") => 0.1,
        _ => 0.0,
    };
    Ok(-(lr.log10() + 3.0).powi(2) - ((units - 96.0) / 64.0).powi(2) + act - c.f64("drop").unwrap())
}

fn key(r: &EvaluationRecord) -> (String, Option<u64>) {
    (serde_json::to_string(&r.candidate).unwrap(), r.value.map(f64::to_bits))
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let opts = |ckpt: Option<&Path>| RunOptions {
        seed: 77,
        checkpoint: ckpt.map(Path::to_path_buf),
        ..Default::default()
    };
    let reference = run(
        resume_space(),
        resume_objective,
        Direction::Maximize,
        Budget::steps(60),
        opts(None),
    )
    .map_err(|e| e.to_string())?;
    let reference: Vec<_> = reference.history.iter().map(key).collect();
    ensure(reference.len() == 60, || format!("{} records", reference.len()))?;
    for k in [1usize, 30, 59] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let path = dir.path().join("run.ckpt");
        let mut first = opts(Some(&path));
        first.callbacks.push(Box::new(StopAfter(k, 0)));
        let interrupted = run(
            resume_space(),
            resume_objective,
            Direction::Maximize,
            Budget::steps(60),
            first,
        );
        ensure(interrupted.is_err(), || format!("k={k}: run was not interrupted"))?;
        let resumed = run(
            resume_space(),
            resume_objective,
            Direction::Maximize,
            Budget::steps(60),
            opts(Some(&path)),
        )
        .map_err(|e| format!("k={k}: {e}"))?;
        let got: Vec<_> = resumed.history.iter().map(key).collect();
        let diverged = got.iter().zip(&reference).position(|(a, b)| a != b);
        ensure(got.len() == reference.len() && diverged.is_none(), || {
            format!("k={k}: {} records, first difference at {diverged:?}", got.len())
        })?;
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "k = 1, 30, 59 resume to the uninterrupted 60-record history, {:.1?}",
        start.elapsed()
    ))
}

fn criterion_7() -> Check {
    let space = SearchSpace::new()
        .add("x", FloatSpec::new(-1.0, 1.0))
        .add("y", FloatSpec::new(-1.0, 1.0));
    let active = AtomicUsize::new(0);
    let peak = AtomicUsize::new(0);
    let calls = AtomicUsize::new(0);
    let objective = |c: &Config| -> Result<f64, ObjectiveError> {
        let now = active.fetch_add(1, Ordering::SeqCst) + 1;
        peak.fetch_max(now, Ordering::SeqCst);
        calls.fetch_add(1, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(2 + c.trial.id % 5));
        active.fetch_sub(1, Ordering::SeqCst);
        Ok(c.f64("x").unwrap().powi(2) + c.f64("y").unwrap().powi(2))
    };
    let result = run(
        space.clone(),
        objective,
        Direction::Minimize,
        Budget::steps(40),
        RunOptions {
            workers: WorkerSpec::count(4).map_err(|e| e.to_string())?,
            seed: 1,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let ids: HashSet<u64> = result.history.iter().map(|r| r.candidate.id).collect();
    let peak = peak.load(Ordering::SeqCst);
    let calls = calls.load(Ordering::SeqCst);
    ensure(result.history.len() == 40 && ids.len() == 40 && calls == 40, || {
        format!(
            "{} settlements, {} unique ids, {calls} objective calls",
            result.history.len(),
            ids.len()
        )
    })?;
    ensure(peak <= 4, || format!("peak concurrency {peak}"))?;

    let bowl =
        |c: &Config| -> Result<f64, ObjectiveError> { Ok(c.f64("x").unwrap().powi(2) + c.f64("y").unwrap().powi(2)) };
    let controller = || {
        SearchState::new(space.clone(), Direction::Minimize, Budget::steps(40), 9, 0.25)
            .map(hopper_core::engine::Controller::new)
            .map_err(|e| e.to_string())
    };
    let mut seq = controller()?;
    run_sequential(&mut seq, &bowl, None).map_err(|e| e.to_string())?;
    let mut pool = controller()?;
    run_parallel(&mut pool, &bowl, &WorkerSpec::count(1).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let a: Vec<_> = seq
        .finish()
        .map_err(|e| e.to_string())?
        .history
        .iter()
        .map(key)
        .collect();
    let b: Vec<_> = pool
        .finish()
        .map_err(|e| e.to_string())?
        .history
        .iter()
        .map(key)
        .collect();
    ensure(a == b, || "single-worker pool diverged from the sequential loop".into())?;
    Ok(format!(
        "40 settlements, 40 unique ids, peak concurrency {peak}; workers=1 matches sequential bit-exactly"
    ))
}

fn criterion_8() -> Check {
    let start = Instant::now();
    let trials = 50;
    let mm = Builtin::new(Kind::Multimodal2d, 2);
    let c = compare(
        &mm,
        CompareSettings {
            steps: 300,
            trials,
            seed_base: 0,
            random_fraction: 0.25,
            baseline_random_fraction: 1.0,
        },
    )
    .map_err(|e| e.to_string())?;
    let wins = c
        .pairs
        .iter()
        .filter(|p| Direction::Maximize.is_better(p.candidate, p.baseline))
        .count();
    let sphere = Builtin::new(Kind::Sphere, 8);
    let mut hits = 0;
    for seed in 0..trials as u64 {
        let best = best_of(&sphere, 300, seed, 0.25).map_err(|e| e.to_string())?;
        if best - sphere.optimum() <= 1e-2 {
            hits += 1;
        }
    }
    let detail = format!("multimodal2d wins {wins}/{trials}, sphere(8) within 1e-2 in {hits}/{trials}");
    ensure(wins * 5 >= trials * 4, || format!("{detail}; need 40 wins"))?;
    ensure(hits * 10 >= trials * 9, || format!("{detail}; need 45 hits"))?;
    within(start, Duration::from_secs(300))?;
    Ok(format!("{detail}, {:.1?}", start.elapsed()))
}

fn criterion_9() -> Check {
    for (text, want) in [("90s", 90.0), ("1h 30min", 5400.0), ("0.5d", 43200.0)] {
        let got = parse_duration(text).map_err(|e| e.to_string())?.seconds;
        ensure(got == want, || format!("{text:?} parsed as {got}"))?;
    }
    let env: HashMap<String, String> = [("CUDA_VISIBLE_DEVICES".to_string(), "0,1,2".to_string())].into();
    let w = resolve_workers("per-gpu", &env).map_err(|e| e.to_string())?;
    let bindings = w.device_bindings.clone().unwrap_or_default();
    ensure(w.resolved == 3 && bindings == ["0", "1", "2"], || format!("{w:?}"))?;

    let bin = env!("CARGO_BIN_EXE_hopper");
    let rejected = [
        vec!["tune", "--objective", "sphere", "--runtime", "fast"],
        vec!["tune", "--objective", "sphere", "--runtime", "3 weeks"],
        vec!["tune", "--objective", "sphere", "--runtime", "-5s"],
        vec!["tune", "--objective", "sphere", "--runtime", ""],
        vec!["tune", "--objective", "sphere", "--steps", "ten"],
        vec!["tune", "--objective", "sphere", "--steps", "5", "--workers", "lots"],
        vec!["tune", "--objective", "sphere", "--steps", "5", "--workers", "0"],
    ];
    for args in &rejected {
        let out = Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
        ensure(out.status.code() == Some(2), || {
            format!("{args:?} exited with {:?}", out.status.code())
        })?;
    }
    Ok(format!(
        "durations 90/5400/43200, per-gpu -> 3 workers {bindings:?}, {} rejections exit 2",
        rejected.len()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("bounds and grid safety", criterion_1),
        ("uniform vs log sampling", criterion_2),
        ("schedule exactness", criterion_3),
        ("incumbent monotonicity", criterion_4),
        ("pruner oracle", criterion_5),
        ("checkpoint resume determinism", criterion_6),
        ("parallel exactly-once", criterion_7),
        ("desk-scale efficacy", criterion_8),
        ("duration and worker parsing", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
