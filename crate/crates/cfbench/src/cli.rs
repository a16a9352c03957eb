//! Command-line surface. Every flag overrides the matching field of the
//! optional `--config` file.

use std::collections::BTreeMap;
use std::path::PathBuf;

use cfbench_core::learners::LearnerKind;
use cfbench_core::models::PhysicsKind;
use clap::{Args, Parser, Subcommand};

use crate::config::{parse_external, parse_oracle, read_toml, KalmanOverrides, RunConfig, SynthSpec};
use crate::error::{Error, Result};
use crate::pipeline;

#[derive(Debug, Parser)]
#[command(name = "cfbench", version, about = "Car-following model calibration and multi-criteria evaluation")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [default: config, then $CFBENCH_OUT, then ./cfbench-out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Simulation step, s.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Lower acceleration bound, m/s².
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub a_min: Option<f64>,
    /// Upper acceleration bound, m/s².
    #[arg(long, global = true)]
    pub a_max: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean, segment, smooth and split raw trajectory files.
    Ingest(IngestArgs),
    /// Calibrate the physics models with the genetic algorithm.
    Calibrate(CalibrateArgs),
    /// Tune and train the learned models.
    Train(TrainArgs),
    /// Simulate, score and rank a model roster.
    Evaluate(EvaluateArgs),
    /// Write a synthetic raw trajectory file.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw trajectory files.
    pub inputs: Vec<PathBuf>,
    /// Column names, e.g. `t=time,x_leader=lead_x,x_follower=foll_x`.
    #[arg(long)]
    pub columns: Option<String>,
    #[arg(long)]
    pub delimiter: Option<char>,
    /// Kalman settings file with `q`, `r` and `initial_covariance`.
    #[arg(long)]
    pub kalman: Option<PathBuf>,
    /// Skip Kalman smoothing.
    #[arg(long)]
    pub no_smooth: bool,
    /// Largest time gap inside one segment, s.
    #[arg(long)]
    pub gap_threshold: Option<f64>,
    /// Shortest segment kept, s.
    #[arg(long)]
    pub min_duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Comma-separated physics models.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Parameter bounds file: `[idm]` / `[acc]` tables of `name = [lo, hi]`.
    #[arg(long)]
    pub bounds: Option<PathBuf>,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Comma-separated learners.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Search trials per learner (0 fits the configured hyperparameters).
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub no_prune: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Comma-separated native models or `name=file` entries.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// External model as `name=program args...`; repeatable.
    #[arg(long)]
    pub external: Vec<String>,
    /// Replay oracle: `perfect`, `biased:OFFSET`, `noisy:SIGMA[:SEED]`,
    /// `lagged:STEPS`, optionally prefixed with `name=`; repeatable.
    #[arg(long)]
    pub oracle: Vec<String>,
    /// Split to evaluate on.
    #[arg(long)]
    pub split: Option<String>,
    /// Also write reports/ranking.svg.
    #[arg(long)]
    pub plot: bool,
    /// Skip the per-segment trajectory files.
    #[arg(long)]
    pub no_trajectories: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Synthetic dataset description (TOML); the built-in one otherwise.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Destination file [default: <out>/synthetic.csv].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn parse_list<T>(items: &[String], parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<Vec<T>> {
    items
        .iter()
        .map(|s| parse(s.trim()).ok_or_else(|| Error::Config(format!("unknown {what} `{s}`"))))
        .collect()
}

fn physics_kind(s: &str) -> Option<PhysicsKind> {
    [PhysicsKind::Idm, PhysicsKind::Acc].into_iter().find(|k| k.as_str() == s)
}

/// Merges the config file and the flags.
pub fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(dt) = cli.dt {
        cfg.dt = dt;
    }
    if let Some(a) = cli.a_min {
        cfg.bounds.a_min = a;
    }
    if let Some(a) = cli.a_max {
        cfg.bounds.a_max = a;
    }
    match &cli.command {
        Command::Ingest(a) => {
            if !a.inputs.is_empty() {
                cfg.input.paths = a.inputs.clone();
            }
            if let Some(c) = &a.columns {
                cfg.input.columns.parse_overrides(c)?;
            }
            if let Some(d) = a.delimiter {
                cfg.input.delimiter = d;
            }
            if let Some(k) = &a.kalman {
                let enabled = cfg.kalman.enabled;
                cfg.kalman = read_toml::<KalmanOverrides>(k)?;
                cfg.kalman.enabled &= enabled;
            }
            if a.no_smooth {
                cfg.kalman.enabled = false;
            }
            if let Some(g) = a.gap_threshold {
                cfg.cleaning.gap_threshold = g;
            }
            if let Some(m) = a.min_duration {
                cfg.cleaning.min_duration = m;
            }
        }
        Command::Calibrate(a) => {
            if let Some(m) = &a.models {
                cfg.calibrate.models = parse_list(m, physics_kind, "physics model")?;
            }
            if let Some(b) = &a.bounds {
                let file: BTreeMap<PhysicsKind, BTreeMap<String, [f64; 2]>> = read_toml(b)?;
                for (k, v) in file {
                    cfg.calibrate.bounds.entry(k).or_default().extend(v);
                }
            }
            if let Some(g) = a.generations {
                cfg.calibrate.generations = g;
            }
            if let Some(p) = a.population {
                cfg.calibrate.population_size = p;
            }
        }
        Command::Train(a) => {
            if let Some(m) = &a.models {
                cfg.train.models = parse_list(m, LearnerKind::parse, "learner")?;
            }
            if let Some(t) = a.trials {
                cfg.train.n_trials = t;
            }
            if let Some(f) = a.folds {
                cfg.train.n_folds = f;
            }
            if a.no_prune {
                cfg.train.prune = false;
            }
        }
        Command::Evaluate(a) => {
            if let Some(m) = &a.models {
                cfg.evaluate.models = m.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            }
            for e in &a.external {
                cfg.evaluate.external.push(parse_external(e)?);
            }
            for o in &a.oracle {
                cfg.evaluate.oracles.push(parse_oracle(o)?);
            }
            if let Some(s) = &a.split {
                cfg.evaluate.split = s.clone();
            }
            if a.plot {
                cfg.evaluate.plot = true;
            }
            if a.no_trajectories {
                cfg.evaluate.dump_trajectories = false;
            }
        }
        Command::Synth(a) => {
            if let Some(s) = &a.spec {
                cfg.synth = read_toml::<SynthSpec>(s)?;
            }
            if let Some(s) = cli.seed {
                cfg.synth.seed = s;
            }
        }
    }
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.6}"))
}

/// Runs one command and returns the text summary printed on success.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = build_config(cli)?;
    let out = cfg.resolve_output(cli.out.as_deref());
    match &cli.command {
        Command::Ingest(_) => {
            let s = pipeline::ingest(&cfg, &out)?;
            Ok(format!(
                "ingested {} rows ({} invalid, {} out of order, {} outliers): {} segments kept, {} too short; \
                 train/validation/test = {}/{}/{} segments -> {}",
                s.rows,
                s.dropped_invalid,
                s.dropped_non_monotone,
                s.outliers_removed,
                s.segments,
                s.discarded_short,
                s.train.segments,
                s.validation.segments,
                s.test.segments,
                out.display()
            ))
        }
        Command::Calibrate(_) => {
            let outcomes = pipeline::calibrate(&cfg, &out)?;
            let lines: Vec<String> = outcomes
                .iter()
                .map(|o| match &o.result {
                    Ok((r, v)) => format!("{}: train mse {:.6}, validation mse {}", o.kind, r.best_fitness, fmt_opt(*v)),
                    Err(e) => format!("{}: failed: {e}", o.kind),
                })
                .collect();
            Ok(lines.join("\n"))
        }
        Command::Train(_) => {
            let outcomes = pipeline::train(&cfg, &out)?;
            let lines: Vec<String> = outcomes
                .iter()
                .map(|o| {
                    format!(
                        "{}: {} trials, cv loss {}, train mse {:.6}, validation mse {}",
                        o.kind,
                        o.trials,
                        fmt_opt(o.cv_loss),
                        o.train_mse,
                        fmt_opt(o.validation_mse)
                    )
                })
                .collect();
            Ok(lines.join("\n"))
        }
        Command::Evaluate(_) => {
            let o = pipeline::evaluate(&cfg, &out)?;
            let mut lines: Vec<String> = o
                .ranking
                .iter()
                .map(|r| format!("{:>3}. {:<16} {:.6}", r.rank, r.model, r.final_score))
                .collect();
            if !o.failures.is_empty() {
                lines.push(format!("{} rollout failures (see reports/failures.csv)", o.failures.len()));
            }
            if let Some(top) = o.ranking.first() {
                lines.push(format!("top-ranked model: {}", top.model));
            }
            Ok(lines.join("\n"))
        }
        Command::Synth(a) => {
            let path = a.output.clone().unwrap_or_else(|| out.join("synthetic.csv"));
            let n = pipeline::synth(&cfg.synth, cfg.bounds, &path)?;
            Ok(format!("wrote {n} rows to {}", path.display()))
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
