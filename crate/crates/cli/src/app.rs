//! Argument parsing and the `tune`, `sample-report` and `compare` commands.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Command as Process, Stdio};

use anyhow::{anyhow, Context};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use hopper_core::engine::{result_json, write_history_csv};
use hopper_core::sampling::{sample_candidate, Rng};
use hopper_core::space::validate_space;
use hopper_core::util::{parse_run_args, parse_steps};
use hopper_core::{
    resolve_workers, run, Budget, Config, Direction, EngineError, ObjectiveError, QuantilePruner, RunOptions,
    SearchSpace,
};

use crate::compare::{compare, write_pairs_csv, CompareSettings};
use crate::objectives::{numeric_vector, Builtin, Kind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug)]
pub enum Failure {
    /// Bad flags or inputs; nothing was run.
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn classify(e: EngineError) -> Failure {
    use hopper_core::persist::PersistError;
    match e {
        EngineError::InvalidSpace(_)
        | EngineError::InvalidBudget(_)
        | EngineError::InvalidOption(_)
        | EngineError::Space(_)
        | EngineError::Exec(_)
        | EngineError::Persist(
            PersistError::DigestMismatch { .. } | PersistError::NotACheckpoint { .. } | PersistError::Version { .. },
        ) => usage(e),
        other => runtime(other),
    }
}

#[derive(Debug, Parser)]
#[command(name = "hopper", version, about = "Two-phase black-box optimizer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a builtin objective or an external command.
    Tune(TuneArgs),
    /// Write raw samples of every parameter of a space file.
    SampleReport(SampleArgs),
    /// Two-phase search against a baseline schedule over paired seeds.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    #[value(alias = "maximize")]
    Max,
    #[value(alias = "minimize")]
    Min,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Max => Direction::Maximize,
            DirectionArg::Min => Direction::Minimize,
        }
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("budget").required(true).args(["runtime", "steps"])))]
#[command(group(ArgGroup::new("target").required(true).multiple(true).args(["objective", "space"])))]
pub struct TuneArgs {
    /// sphere, rosenbrock, rastrigin, multimodal2d or noisy_sphere.
    #[arg(long, value_parser = clap::value_parser!(KindArg))]
    pub objective: Option<KindArg>,
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    /// Observation noise of noisy_sphere.
    #[arg(long, default_value_t = 0.1)]
    pub noise_sigma: f64,
    /// JSON space file. With --objective the builtin is applied to the
    /// flattened numeric parameters; with --command an external program is run.
    #[arg(long)]
    pub space: Option<PathBuf>,
    /// Shell command reading the configuration as JSON on stdin and printing
    /// the objective value as the last line of stdout.
    #[arg(long, requires = "space", conflicts_with = "objective")]
    pub command: Option<String>,
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
    /// Wall-clock budget such as "1h 30min", or "<N> steps".
    #[arg(long)]
    pub runtime: Option<String>,
    #[arg(long)]
    pub steps: Option<String>,
    /// Positive integer, "auto", "per-gpu" or "<N>x per-gpu".
    #[arg(long, default_value = "1")]
    pub workers: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub eval_repeats: usize,
    /// Prune candidates whose running mean is outside the top fraction Q.
    #[arg(long)]
    pub prune_quantile: Option<f64>,
    #[arg(long, default_value_t = hopper_core::engine::DEFAULT_RANDOM_FRACTION)]
    pub random_fraction: f64,
    /// JSON array of (possibly partial) configurations to evaluate first.
    #[arg(long)]
    pub queue: Option<PathBuf>,
    #[arg(long)]
    pub history_out: Option<PathBuf>,
    #[arg(long)]
    pub result_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KindArg(pub Kind);

impl std::str::FromStr for KindArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(KindArg)
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, value_parser = clap::value_parser!(KindArg))]
    pub objective: KindArg,
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise_sigma: f64,
    #[arg(long, default_value = "300")]
    pub steps: String,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// First seed; trial i uses seed base + i for both schedules.
    #[arg(long = "seeds", alias = "seed-base", default_value_t = 0)]
    pub seed_base: u64,
    #[arg(long, default_value_t = hopper_core::engine::DEFAULT_RANDOM_FRACTION)]
    pub random_fraction: f64,
    /// Schedule of the baseline; 1.0 is pure random search.
    #[arg(long, default_value_t = 1.0)]
    pub baseline_random_fraction: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{rendered}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{rendered}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Tune(a) => tune(&a, out),
        Command::SampleReport(a) => sample_report(&a, out),
        Command::Compare(a) => compare_cmd(&a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let (Failure::Usage(e) | Failure::Runtime(e)) = &f;
            let _ = writeln!(err, "error: {e:#}");
            f.code()
        }
    }
}

fn load_space(path: &Path) -> Result<SearchSpace, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading space file {}", path.display()))
        .map_err(usage)?;
    let space = SearchSpace::from_json_str(&text)
        .with_context(|| format!("parsing space file {}", path.display()))
        .map_err(usage)?;
    let violations = validate_space(&space);
    if !violations.is_empty() {
        let listed: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
        return Err(usage(anyhow!(
            "invalid space file {}:\n{}",
            path.display(),
            listed.join("\n")
        )));
    }
    Ok(space)
}

fn builtin(kind: Kind, dims: usize, noise_sigma: f64, seed: u64) -> Result<Builtin, Failure> {
    let mut b = Builtin::new(kind, dims);
    b.noise_sigma = noise_sigma;
    b.seed = seed;
    b.validate().map_err(|m| usage(anyhow!(m)))?;
    Ok(b)
}

fn run_command(cmd: &str, config: &Config) -> Result<f64, ObjectiveError> {
    let mut child = Process::new("sh")
        .arg("-c")
        .arg(cmd)
        .envs(config.worker_env())
        .env("HOPPER_TRIAL_ID", config.trial.id.to_string())
        .env("HOPPER_REPEAT", config.trial.repeat.to_string())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| ObjectiveError::new(format!("cannot start {cmd:?}: {e}")))?;
    if let Some(mut stdin) = child.stdin.take() {
        // a command that ignores its input may close stdin early
        let _ = writeln!(stdin, "{}", config.to_json_string());
    }
    let output = child
        .wait_with_output()
        .map_err(|e| ObjectiveError::new(format!("waiting for {cmd:?}: {e}")))?;
    if !output.status.success() {
        return Err(ObjectiveError::new(format!("{cmd:?} exited with {}", output.status)));
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    let last = stdout.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
    last.trim()
        .parse()
        .map_err(|_| ObjectiveError::new(format!("{cmd:?} printed {last:?}, expected a number")))
}

enum Target {
    Builtin(Builtin),
    /// Builtin function applied to the flattened numeric parameters of a space file.
    OnSpace(Builtin),
    Command(String),
}

impl Target {
    fn evaluate(&self, c: &Config) -> Result<f64, ObjectiveError> {
        match self {
            Target::Builtin(b) => b.evaluate(c),
            Target::OnSpace(b) => {
                let x = numeric_vector(c)?;
                let b = Builtin {
                    dims: x.len(),
                    ..b.clone()
                };
                b.evaluate_point(&x, c.trial.id, c.trial.repeat)
            }
            Target::Command(cmd) => run_command(cmd, c),
        }
    }
}

fn read_queue(path: &Path) -> Result<Vec<serde_json::Map<String, serde_json::Value>>, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading queue file {}", path.display()))
        .map_err(usage)?;
    serde_json::from_str(&text)
        .with_context(|| format!("queue file {} must hold a JSON array of objects", path.display()))
        .map_err(usage)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(runtime)
}

pub fn tune(a: &TuneArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let (space, target) = match (&a.space, a.objective, &a.command) {
        (None, Some(KindArg(kind)), _) => {
            let b = builtin(kind, a.dims, a.noise_sigma, a.seed)?;
            (b.space(), Target::Builtin(b))
        }
        (Some(path), Some(KindArg(kind)), _) => {
            if kind == Kind::Multimodal2d {
                return Err(usage(anyhow!("multimodal2d cannot be applied to a space file")));
            }
            let space = load_space(path)?;
            (
                space,
                Target::OnSpace(builtin(kind, a.dims.max(2), a.noise_sigma, a.seed)?),
            )
        }
        (Some(path), None, Some(cmd)) => (load_space(path)?, Target::Command(cmd.clone())),
        (Some(_), None, None) => return Err(usage(anyhow!("--space needs either --objective or --command"))),
        (None, None, _) => return Err(usage(anyhow!("one of --objective or --space is required"))),
    };
    let direction: Direction = match (a.direction, &target) {
        (Some(d), _) => d.into(),
        (None, Target::Builtin(b) | Target::OnSpace(b)) => b.kind.direction(),
        (None, Target::Command(_)) => return Err(usage(anyhow!("--direction is required with --command"))),
    };
    let budget = match (&a.steps, &a.runtime) {
        (Some(s), _) => Budget::steps(parse_steps(s).map_err(usage)?),
        (None, Some(r)) => parse_run_args(r).map_err(usage)?,
        (None, None) => unreachable!("clap requires a budget"),
    };
    let env: HashMap<String, String> = std::env::vars().collect();
    let workers = resolve_workers(&a.workers, &env).map_err(usage)?;
    let pruner = a
        .prune_quantile
        .map(|q| QuantilePruner::new(q).map_err(usage))
        .transpose()?;
    let queue = match &a.queue {
        Some(p) => read_queue(p)?,
        None => Vec::new(),
    };

    let objective = |c: &Config| target.evaluate(c);
    let result = run(
        space.clone(),
        objective,
        direction,
        budget,
        RunOptions {
            workers,
            seed: a.seed,
            pruner,
            eval_repeats: a.eval_repeats,
            random_fraction: a.random_fraction,
            callbacks: Vec::new(),
            checkpoint: a.checkpoint.clone(),
            queue,
        },
    )
    .map_err(classify)?;

    if let Some(path) = &a.history_out {
        write_history_csv(create(path)?, &result.history, &space)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(runtime)?;
    }
    let summary = result_json(&result, &space, direction, &budget, a.seed);
    if let Some(path) = &a.result_out {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &summary)
            .map_err(anyhow::Error::from)
            .and_then(|_| writeln!(w).and_then(|_| w.flush()).map_err(anyhow::Error::from))
            .with_context(|| format!("writing {}", path.display()))
            .map_err(runtime)?;
    }

    let write_err = |e: std::io::Error| runtime(e);
    writeln!(out, "evaluations: {}", result.history.len()).map_err(write_err)?;
    match &result.best {
        Some(best) => {
            writeln!(out, "best value: {}", best.value).map_err(write_err)?;
            writeln!(
                out,
                "best params: {}",
                serde_json::Value::Object(space.record(&best.candidate))
            )
            .map_err(write_err)?;
        }
        None => writeln!(out, "best value: none").map_err(write_err)?,
    }
    if result.best.is_none() && !result.history.is_empty() {
        return Err(runtime(anyhow!(
            "all {} evaluations failed or were pruned",
            result.history.len()
        )));
    }
    Ok(())
}

pub fn sample_report(a: &SampleArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let space = load_space(&a.space)?;
    let mut names: Vec<&str> = space.names().collect();
    names.sort_unstable();
    let sink: Box<dyn Write + '_> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(&mut *out),
    };
    let mut w = csv::Writer::from_writer(sink);
    let mut rng = Rng::new(a.seed);
    let mut write = || -> Result<(), csv::Error> {
        w.write_record(&names)?;
        for _ in 0..a.n {
            let record = space.record(&sample_candidate(&space, &mut rng));
            w.write_record(names.iter().map(|n| match &record[*n] {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            }))?;
        }
        w.flush()?;
        Ok(())
    };
    write().context("writing samples").map_err(runtime)
}

pub fn compare_cmd(a: &CompareArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if a.trials == 0 {
        return Err(usage(anyhow!("--trials must be at least 1")));
    }
    let steps = parse_steps(&a.steps).map_err(usage)?;
    let b = builtin(a.objective.0, a.dims, a.noise_sigma, a.seed_base)?;
    let c = compare(
        &b,
        CompareSettings {
            steps,
            trials: a.trials,
            seed_base: a.seed_base,
            random_fraction: a.random_fraction,
            baseline_random_fraction: a.baseline_random_fraction,
        },
    )
    .map_err(classify)?;
    if let Some(path) = &a.out {
        write_pairs_csv(create(path)?, &c)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(runtime)?;
    }
    let mut print = || -> std::io::Result<()> {
        writeln!(
            out,
            "{:>5}  {:>20}  {:>22}  {:>22}  {:>5}",
            "trial", "seed", "two_phase", "baseline", "score"
        )?;
        for p in &c.pairs {
            writeln!(
                out,
                "{:>5}  {:>20}  {:>22.12e}  {:>22.12e}  {:>5}",
                p.trial, p.seed, p.candidate, p.baseline, p.score
            )?;
        }
        writeln!(out, "win rate: {:.4}", c.win_rate)?;
        writeln!(
            out,
            "two_phase mean {:.6e} std {:.6e}",
            c.candidate_mean, c.candidate_std
        )?;
        writeln!(out, "baseline  mean {:.6e} std {:.6e}", c.baseline_mean, c.baseline_std)
    };
    print().map_err(runtime)
}
