use std::path::Path;

use hopper_core::engine::{Controller, SearchState};
use hopper_core::persist::{self, Autosaver};
use hopper_core::{
    exec, run, Budget, Callback, CallbackError, ChoiceSpec, Config, Direction, EngineError, EvaluationRecord,
    FloatSpec, IntSpec, ObjectiveError, QuantilePruner, RunOptions, SearchResult, SearchSpace, Status,
};

const STEPS: u64 = 60;
const SEED: u64 = 2024;

fn space() -> SearchSpace {
    SearchSpace::new()
        .add("lr", FloatSpec::new(1e-5, 1e-1).log())
        .add("units", IntSpec::new(16, 256).multiple_of(16))
        .add("act", ChoiceSpec::new(["relu", "tanh", "gelu"]))
}

fn objective(c: &Config) -> Result<f64, ObjectiveError> {
    let lr = c.f64("lr").unwrap();
    let units = c.i64("units").unwrap() as f64;
    let bonus = if c.str("act") == Some("gelu") { 0.3 } else { 0.0 };
    Ok(-(lr.log10() + 3.0).powi(2) - ((units - 128.0) / 64.0).powi(2) + bonus)
}

struct AbortAfter(usize, usize);

impl Callback for AbortAfter {
    fn on_evaluated(&mut self, _: &EvaluationRecord) -> Result<(), CallbackError> {
        self.1 += 1;
        if self.1 >= self.0 {
            return Err("interrupted".into());
        }
        Ok(())
    }
}

fn options(ckpt: Option<&Path>) -> RunOptions<'static> {
    RunOptions {
        seed: SEED,
        checkpoint: ckpt.map(Path::to_path_buf),
        ..Default::default()
    }
}

fn fingerprint(history: &[EvaluationRecord]) -> Vec<(u64, String, Status, Option<u64>)> {
    history
        .iter()
        .map(|r| {
            (
                r.candidate.id,
                serde_json::to_string(&r.candidate).unwrap(),
                r.status,
                r.value.map(f64::to_bits),
            )
        })
        .collect()
}

fn uninterrupted() -> SearchResult {
    run(
        space(),
        objective,
        Direction::Maximize,
        Budget::steps(STEPS),
        options(None),
    )
    .unwrap()
}

#[test]
fn resumed_history_matches_uninterrupted_run() {
    let reference = uninterrupted();
    assert_eq!(reference.history.len(), STEPS as usize);
    for k in [1usize, 30, 59] {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ckpt");
        let mut opts = options(Some(&path));
        opts.callbacks.push(Box::new(AbortAfter(k, 0)));
        let err = run(space(), objective, Direction::Maximize, Budget::steps(STEPS), opts).unwrap_err();
        assert!(matches!(err, EngineError::Callback { .. }), "{err}");
        assert_eq!(persist::load(&path).unwrap().history.len(), k);

        let resumed = run(
            space(),
            objective,
            Direction::Maximize,
            Budget::steps(STEPS),
            options(Some(&path)),
        )
        .unwrap();
        assert_eq!(
            fingerprint(&resumed.history),
            fingerprint(&reference.history),
            "k = {k}"
        );
        assert_eq!(resumed.best, reference.best);
    }
}

#[test]
fn resume_keeps_pruner_history() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    let pruned = |ckpt: Option<&Path>, abort: Option<usize>| {
        let mut opts = options(ckpt);
        opts.pruner = Some(QuantilePruner::new(0.5).unwrap());
        opts.eval_repeats = 3;
        if let Some(k) = abort {
            opts.callbacks.push(Box::new(AbortAfter(k, 0)));
        }
        run(space(), objective, Direction::Maximize, Budget::steps(30), opts)
    };
    let reference = pruned(None, None).unwrap();
    assert!(reference.history.iter().any(|r| r.status == Status::Pruned));
    pruned(Some(&path), Some(12)).unwrap_err();
    let resumed = pruned(Some(&path), None).unwrap();
    assert_eq!(fingerprint(&resumed.history), fingerprint(&reference.history));
}

#[test]
fn every_settlement_is_flushed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flush.ckpt");
    let state = SearchState::new(space(), Direction::Maximize, Budget::steps(20), SEED, 0.25).unwrap();
    let mut controller = Controller::new(state).with_autosave(Some(Autosaver::new(path.clone())));
    exec::run_sequential(&mut controller, &objective, None).unwrap();
    assert!(controller.autosaver().unwrap().flushes() >= 20);
    let result = controller.finish().unwrap();
    let saved = persist::load(&path).unwrap();
    assert_eq!(saved.history, result.history);
}

#[test]
fn finished_checkpoint_resumes_to_same_result() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("done.ckpt");
    let first = run(
        space(),
        objective,
        Direction::Maximize,
        Budget::steps(15),
        options(Some(&path)),
    )
    .unwrap();
    let again = run(
        space(),
        objective,
        Direction::Maximize,
        Budget::steps(15),
        options(Some(&path)),
    )
    .unwrap();
    assert_eq!(fingerprint(&first.history), fingerprint(&again.history));

    // a larger budget continues where the first run stopped
    let longer = run(
        space(),
        objective,
        Direction::Maximize,
        Budget::steps(25),
        options(Some(&path)),
    )
    .unwrap();
    assert_eq!(longer.history.len(), 25);
    assert_eq!(fingerprint(&longer.history[..15]), fingerprint(&first.history));
}

#[test]
fn mismatched_space_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.ckpt");
    run(
        space(),
        objective,
        Direction::Maximize,
        Budget::steps(3),
        options(Some(&path)),
    )
    .unwrap();
    let other = space().add("extra", FloatSpec::new(0.0, 1.0));
    let err = run(
        other,
        objective,
        Direction::Maximize,
        Budget::steps(3),
        options(Some(&path)),
    )
    .unwrap_err();
    assert!(matches!(err, EngineError::Persist(_)), "{err}");
}

#[test]
fn directory_checkpoint_gets_a_fresh_file() {
    let dir = tempfile::tempdir().unwrap();
    run(
        space(),
        objective,
        Direction::Maximize,
        Budget::steps(3),
        options(Some(dir.path())),
    )
    .unwrap();
    let files: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(files.len(), 1);
    assert_eq!(persist::load(&files[0]).unwrap().history.len(), 3);
}
