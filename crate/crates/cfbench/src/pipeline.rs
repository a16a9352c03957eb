//! The pipeline commands. Each reads only the files written by the previous
//! stage under the output directory.

use std::path::{Path, PathBuf};

use cfbench_core::calibration::{
    calibrate_ga, make_cv_plan, physics_fitness, tune_hyperparameters, GaResult, SearchResult,
};
use cfbench_core::dataio::{
    generate_synthetic, partition, remove_outliers, segment_from_observations, split, DatasetSplit, FeatureSet,
    RawObservation, SyntheticConfig, TrajectorySegment,
};
use cfbench_core::learners::{
    self, fit_forest_tree, Hyperparameters, LearnerKind, PreparedData, TrainedRegressor,
};
use cfbench_core::metrics::{evaluate_model, MetricReport};
use cfbench_core::models::oracle::OracleModel;
use cfbench_core::models::{CarFollowingModel, PhysicsKind};
use cfbench_core::scoring::{score, RankedModel, ScoreError};
use cfbench_core::simulation::{rollout_on_grid, ObservedGrid, RolloutFailure, SimulatedTrajectory};
use cfbench_core::smoothing::smooth_segment;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExternalSpec, OracleSpec, RunConfig, SynthSpec};
use crate::error::{Error, Result};
use crate::external::ExternalModel;
use crate::ingest::{read_observations, write_observations, ReadStats};
use crate::model_io::{load_learner, physics_model, save_learner, save_params, ParamsFile, PhysicsModel};
use crate::report;
use crate::segments::{read_dataset, write_dataset, SplitName};

/// File locations under an output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn segments(&self) -> PathBuf {
        self.root.join("segments.csv")
    }

    pub fn ingest_summary(&self) -> PathBuf {
        self.root.join("ingest_summary.json")
    }

    pub fn params_dir(&self) -> PathBuf {
        self.root.join("params")
    }

    pub fn params(&self, kind: PhysicsKind) -> PathBuf {
        self.params_dir().join(format!("{kind}.toml"))
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn learner(&self, kind: LearnerKind) -> PathBuf {
        self.models_dir().join(format!("{kind}.json"))
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn trajectories(&self) -> PathBuf {
        self.root.join("trajectories")
    }
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SplitSummary {
    pub segments: usize,
    pub duration: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestSummary {
    pub inputs: Vec<String>,
    pub rows: usize,
    pub dropped_invalid: usize,
    pub dropped_non_monotone: usize,
    pub outliers_removed: usize,
    pub runs: usize,
    pub segments: usize,
    pub discarded_short: usize,
    pub duration_before_filter: f64,
    pub duration_after_filter: f64,
    pub smoothed: bool,
    pub train: SplitSummary,
    pub validation: SplitSummary,
    pub test: SplitSummary,
}

/// Read → outlier removal → gap segmentation and duration filter → Kalman
/// smoothing → whole-segment split.
pub fn ingest(cfg: &RunConfig, out: &Path) -> Result<IngestSummary> {
    cfg.validate()?;
    if cfg.input.paths.is_empty() {
        return Err(Error::Config("no input files".into()));
    }
    let delimiter = u8::try_from(cfg.input.delimiter)
        .ok()
        .filter(u8::is_ascii)
        .ok_or_else(|| Error::Config(format!("delimiter `{}` must be a single ASCII character", cfg.input.delimiter)))?;
    let kalman = cfg.kalman.to_config()?;
    let seg_cfg = cfg.cleaning.segmentation();
    let mut summary = IngestSummary {
        smoothed: cfg.kalman.enabled,
        ..Default::default()
    };
    let mut segments: Vec<TrajectorySegment> = Vec::new();
    for path in &cfg.input.paths {
        let (obs, ReadStats {
            rows,
            dropped_invalid,
            dropped_non_monotone,
        }) = read_observations(path, &cfg.input.columns, delimiter)?;
        summary.inputs.push(path.display().to_string());
        summary.rows += rows;
        summary.dropped_invalid += dropped_invalid;
        summary.dropped_non_monotone += dropped_non_monotone;
        let clean = remove_outliers(&obs, cfg.cleaning.limits());
        summary.outliers_removed += obs.len() - clean.len();
        let parts = partition(&clean, seg_cfg);
        let (before, after) = parts.durations();
        summary.runs += parts.runs.len();
        summary.discarded_short += parts.discarded().count();
        summary.duration_before_filter += before;
        summary.duration_after_filter += after;
        for run in parts.retained() {
            let id = format!("seg-{:04}", segments.len());
            segments.push(segment_from_observations(id, run));
        }
    }
    if cfg.kalman.enabled {
        segments = segments
            .iter()
            .map(|s| smooth_segment(s, &kalman))
            .collect::<std::result::Result<_, _>>()?;
    }
    summary.segments = segments.len();
    let ds = split(&segments, cfg.split, cfg.seed)?;
    let sum = |v: &[TrajectorySegment]| SplitSummary {
        segments: v.len(),
        duration: v.iter().map(TrajectorySegment::duration).sum(),
    };
    summary.train = sum(&ds.train);
    summary.validation = sum(&ds.validation);
    summary.test = sum(&ds.test);

    let layout = Layout::new(out);
    mkdir(&layout.root)?;
    write_dataset(&layout.segments(), &ds)?;
    write_json(&layout.ingest_summary(), &summary)?;
    Ok(summary)
}

fn load_dataset(layout: &Layout) -> Result<DatasetSplit> {
    let p = layout.segments();
    if !p.exists() {
        return Err(Error::Config(format!("{} not found; run `cfbench ingest` first", p.display())));
    }
    read_dataset(&p)
}

/// Pairs of the given segments, ordered by segment start time, with a
/// strictly increasing sequence key for temporal cross-validation.
fn ordered_features(segments: &[TrajectorySegment]) -> Result<FeatureSet> {
    let mut segs: Vec<&TrajectorySegment> = segments.iter().collect();
    segs.sort_by(|a, b| a.start_time().total_cmp(&b.start_time()).then_with(|| a.id.cmp(&b.id)));
    let owned: Vec<TrajectorySegment> = segs.into_iter().cloned().collect();
    let mut f = FeatureSet::from_segments(&owned)?;
    // several input files may overlap in time; only the order matters
    f.times = (0..f.len()).map(|i| i as f64).collect();
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationOutcome {
    pub kind: PhysicsKind,
    pub result: std::result::Result<(GaResult, Option<f64>), String>,
}

/// GA calibration of each configured physics model on the training split.
/// Models are isolated: one failing does not stop the others.
pub fn calibrate(cfg: &RunConfig, out: &Path) -> Result<Vec<CalibrationOutcome>> {
    cfg.validate()?;
    let layout = Layout::new(out);
    let ds = load_dataset(&layout)?;
    let train = ordered_features(&ds.train)?;
    let val = ordered_features(&ds.validation)?;
    let kinds = cfg.calibrate.models.clone();
    if kinds.is_empty() {
        return Err(Error::Config("no physics models to calibrate".into()));
    }
    // validate every GA config up front so bad bounds fail before any work
    let configs = kinds
        .iter()
        .map(|&k| cfg.calibrate.ga_config(k, cfg.seed, cfg.bounds))
        .collect::<Result<Vec<_>>>()?;
    mkdir(&layout.params_dir())?;
    mkdir(&layout.reports())?;
    let outcomes: Vec<CalibrationOutcome> = kinds
        .par_iter()
        .zip(configs.par_iter())
        .map(|(&kind, ga)| {
            let result = calibrate_ga(kind, &train.states, &train.targets, ga)
                .map_err(|e| e.to_string())
                .map(|r| {
                    let v = (!val.is_empty())
                        .then(|| physics_fitness(kind, &r.best, &val.states, &val.targets, ga.accel_bounds));
                    (r, v)
                });
            CalibrationOutcome { kind, result }
        })
        .collect();
    for o in &outcomes {
        if let Ok((r, v)) = &o.result {
            let f = ParamsFile::new(o.kind, &r.best, cfg.seed, r.best_fitness, *v);
            save_params(&layout.params(o.kind), &f)?;
            report::write_ga_history(&layout.reports().join(format!("ga_{}.csv", o.kind)), r)?;
        }
    }
    if outcomes.iter().all(|o| o.result.is_err()) {
        let msgs: Vec<String> = outcomes
            .iter()
            .map(|o| format!("{}: {}", o.kind, o.result.as_ref().err().unwrap()))
            .collect();
        return Err(Error::Failed(format!("every calibration failed: {}", msgs.join("; "))));
    }
    Ok(outcomes)
}

/// Random-forest fit with trees built in parallel; identical to the serial
/// fit for the same seed.
pub fn fit_rf_parallel(
    features: &FeatureSet,
    hp: &learners::RfHyperparameters,
    seed: u64,
) -> Result<TrainedRegressor> {
    hp.validate()?;
    let data = PreparedData::new(&features.states, &features.targets, LearnerKind::Rf.min_pairs())?;
    let trees = if data.constant.is_some() {
        Vec::new()
    } else {
        (0..hp.n_trees)
            .into_par_iter()
            .map(|i| fit_forest_tree(&data.x, &data.y, hp, seed, i))
            .collect()
    };
    Ok(TrainedRegressor::from_forest_trees("rf", &data, *hp, seed, trees))
}

pub fn fit_learner(features: &FeatureSet, hp: &Hyperparameters, seed: u64) -> Result<TrainedRegressor> {
    match hp {
        Hyperparameters::Rf(h) => fit_rf_parallel(features, h, seed),
        other => Ok(learners::fit(&features.states, &features.targets, other, seed)?),
    }
}

fn mse(model: &TrainedRegressor, f: &FeatureSet) -> Option<f64> {
    (!f.is_empty()).then(|| {
        f.states
            .iter()
            .zip(&f.targets)
            .map(|(s, y)| (model.predict_state(s) - y).powi(2))
            .sum::<f64>()
            / f.len() as f64
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingOutcome {
    pub kind: LearnerKind,
    pub hyperparameters: Hyperparameters,
    /// Best cross-validated loss; absent when the search was skipped.
    pub cv_loss: Option<f64>,
    pub trials: usize,
    pub train_mse: f64,
    pub validation_mse: Option<f64>,
}

/// Hyperparameter search with temporal cross-validation on the training
/// split, then a final fit of the best configuration on the whole training
/// split.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<Vec<TrainingOutcome>> {
    cfg.validate()?;
    let layout = Layout::new(out);
    let ds = load_dataset(&layout)?;
    let train = ordered_features(&ds.train)?;
    let val = ordered_features(&ds.validation)?;
    if cfg.train.models.is_empty() {
        return Err(Error::Config("no learners to train".into()));
    }
    for k in &cfg.train.models {
        cfg.train.search_space(*k).validate().map_err(|e| Error::Config(e.to_string()))?;
        cfg.train.hyperparameters(*k).validate().map_err(|e| Error::Config(e.to_string()))?;
    }
    mkdir(&layout.models_dir())?;
    mkdir(&layout.reports())?;
    let plan = if cfg.train.n_trials > 0 {
        Some(make_cv_plan(&train.times, cfg.train.n_folds)?)
    } else {
        None
    };
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for &kind in &cfg.train.models {
        let run = || -> Result<TrainingOutcome> {
            let (hp, search): (Hyperparameters, Option<SearchResult>) = match &plan {
                Some(plan) => {
                    let r = tune_hyperparameters(&cfg.train.search_space(kind), &cfg.train.budget(), plan, &train, cfg.seed);
                    match r {
                        Ok(r) => (r.best, Some(r)),
                        Err(cfbench_core::calibration::CalibrationError::SearchFailed(trials)) => {
                            report::write_trials(&layout.reports().join(format!("search_{kind}.csv")), &trials)?;
                            return Err(Error::Failed(format!("{kind}: every trial was pruned or failed")));
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                None => (cfg.train.hyperparameters(kind), None),
            };
            let model = fit_learner(&train, &hp, cfg.seed)?;
            save_learner(&layout.learner(kind), &model)?;
            if let Some(s) = &search {
                report::write_trials(&layout.reports().join(format!("search_{kind}.csv")), &s.trials)?;
            }
            Ok(TrainingOutcome {
                kind,
                hyperparameters: hp,
                cv_loss: search.as_ref().map(|s| s.best_loss),
                trials: search.as_ref().map_or(0, |s| s.trials.len()),
                train_mse: model.summary.train_mse,
                validation_mse: mse(&model, &val),
            })
        };
        match run() {
            Ok(o) => outcomes.push(o),
            Err(e) => failures.push(format!("{kind}: {e}")),
        }
    }
    write_json(&layout.reports().join("training.json"), &outcomes)?;
    if outcomes.is_empty() {
        return Err(Error::Failed(format!("every learner failed: {}", failures.join("; "))));
    }
    for f in failures {
        eprintln!("warning: {f}");
    }
    Ok(outcomes)
}

/// One roster member, resolved but not yet instantiated.
#[derive(Debug, Clone, PartialEq)]
pub enum RosterEntry {
    Physics { name: String, path: PathBuf },
    Learner { name: String, path: PathBuf },
    External(ExternalSpec),
    Oracle(OracleSpec),
}

impl RosterEntry {
    pub fn name(&self) -> &str {
        match self {
            RosterEntry::Physics { name, .. } | RosterEntry::Learner { name, .. } => name,
            RosterEntry::External(s) => &s.name,
            RosterEntry::Oracle(s) => &s.name,
        }
    }

    fn instantiate(&self) -> Result<Box<dyn CarFollowingModel>> {
        Ok(match self {
            RosterEntry::Physics { name, path } => match physics_model(path)? {
                PhysicsModel::Idm(mut m) => {
                    m.name = name.clone();
                    Box::new(m)
                }
                PhysicsModel::Acc(mut m) => {
                    m.name = name.clone();
                    Box::new(m)
                }
            },
            RosterEntry::Learner { name, path } => {
                let mut m = load_learner(path)?;
                m.name = name.clone();
                Box::new(m)
            }
            RosterEntry::External(spec) => {
                Box::new(ExternalModel::spawn(spec).map_err(|e| Error::Failed(format!("{}: {e}", spec.name)))?)
            }
            RosterEntry::Oracle(spec) => Box::new(OracleModel::new(spec.name.clone(), spec.oracle)),
        })
    }
}

/// `idm`, `acc`, `gbt`, `rf`, `fnn` resolve inside the output directory;
/// `name=path` loads a parameter (`.toml`) or learner (`.json`) file.
pub fn resolve_roster(cfg: &RunConfig, layout: &Layout) -> Result<Vec<RosterEntry>> {
    let mut roster = Vec::new();
    for m in &cfg.evaluate.models {
        let entry = if let Some((name, path)) = m.split_once('=') {
            let path = PathBuf::from(path.trim());
            let name = name.trim().to_string();
            match path.extension().and_then(|e| e.to_str()) {
                Some("toml") => RosterEntry::Physics { name, path },
                Some("json") => RosterEntry::Learner { name, path },
                _ => return Err(Error::Config(format!("model file `{}` must end in .toml or .json", path.display()))),
            }
        } else if let Some(k) = [PhysicsKind::Idm, PhysicsKind::Acc].into_iter().find(|k| k.as_str() == m) {
            RosterEntry::Physics {
                name: m.clone(),
                path: layout.params(k),
            }
        } else if let Some(k) = LearnerKind::parse(m) {
            RosterEntry::Learner {
                name: m.clone(),
                path: layout.learner(k),
            }
        } else {
            return Err(Error::Config(format!("unknown model `{m}`")));
        };
        roster.push(entry);
    }
    roster.extend(cfg.evaluate.external.iter().cloned().map(RosterEntry::External));
    roster.extend(cfg.evaluate.oracles.iter().cloned().map(RosterEntry::Oracle));
    let mut names: Vec<&str> = Vec::new();
    for e in &roster {
        if names.contains(&e.name()) {
            return Err(Error::Config(format!("model name `{}` appears twice in the roster", e.name())));
        }
        names.push(e.name());
    }
    if roster.len() < 2 {
        return Err(Error::Score(ScoreError::TooFewModels(roster.len())));
    }
    Ok(roster)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRun {
    pub name: String,
    pub trajectories: Vec<SimulatedTrajectory>,
    pub failures: Vec<RolloutFailure>,
}

fn run_model(entry: &RosterEntry, grids: &[ObservedGrid], bounds: cfbench_core::AccelerationBounds) -> ModelRun {
    let name = entry.name().to_string();
    let fail_all = |message: String| ModelRun {
        name: name.clone(),
        trajectories: Vec::new(),
        failures: grids
            .iter()
            .map(|g| RolloutFailure {
                model: name.clone(),
                segment_id: g.segment_id.clone(),
                message: message.clone(),
            })
            .collect(),
    };
    let mut model = match entry.instantiate() {
        Ok(m) => m,
        Err(e) => return fail_all(e.to_string()),
    };
    let mut run = ModelRun {
        name: name.clone(),
        trajectories: Vec::new(),
        failures: Vec::new(),
    };
    for g in grids {
        match rollout_on_grid(g, model.as_mut(), bounds) {
            Ok(t) => run.trajectories.push(t),
            Err(e) => run.failures.push(RolloutFailure {
                model: name.clone(),
                segment_id: g.segment_id.clone(),
                message: e.to_string(),
            }),
        }
    }
    run
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationOutcome {
    pub ranking: Vec<RankedModel>,
    pub reports: Vec<MetricReport>,
    pub failures: Vec<RolloutFailure>,
    /// Models left out of scoring because none of their rollouts succeeded.
    pub unscored: Vec<String>,
}

/// Closed-loop simulation of every roster model on the evaluation split,
/// metrics, z-score scoring and the report set.
pub fn evaluate(cfg: &RunConfig, out: &Path) -> Result<EvaluationOutcome> {
    cfg.validate()?;
    let layout = Layout::new(out);
    let map = cfg.evaluate.category_map()?;
    let split_name = SplitName::parse(&cfg.evaluate.split)
        .ok_or_else(|| Error::Config(format!("unknown split `{}`", cfg.evaluate.split)))?;
    let roster = resolve_roster(cfg, &layout)?;
    let ds = load_dataset(&layout)?;
    let segments = match split_name {
        SplitName::Train => &ds.train,
        SplitName::Validation => &ds.validation,
        SplitName::Test => &ds.test,
    };
    if segments.is_empty() {
        return Err(Error::Config(format!("the {} split has no segments", split_name.as_str())));
    }
    let grids = segments
        .iter()
        .map(|s| ObservedGrid::from_segment(s, cfg.dt))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    // one model instance (and process, for external models) per worker
    let runs: Vec<ModelRun> = roster.par_iter().map(|e| run_model(e, &grids, cfg.bounds)).collect();

    let metric_cfg = cfg.evaluate.metric_config();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut unscored = Vec::new();
    for run in &runs {
        failures.extend(run.failures.iter().cloned());
        if run.trajectories.is_empty() {
            unscored.push(run.name.clone());
            continue;
        }
        match evaluate_model(&run.name, &run.trajectories, &metric_cfg) {
            Ok(r) => reports.push(r),
            Err(e) => {
                failures.push(RolloutFailure {
                    model: run.name.clone(),
                    segment_id: String::new(),
                    message: format!("metrics: {e}"),
                });
                unscored.push(run.name.clone());
            }
        }
    }
    let reports_dir = layout.reports();
    mkdir(&reports_dir)?;
    report::write_failures(&reports_dir.join("failures.csv"), &failures)?;
    if reports.is_empty() {
        return Err(Error::Failed("every model failed on every segment; see failures.csv".into()));
    }
    if reports.len() < 2 {
        return Err(Error::Failed(format!(
            "only `{}` produced trajectories; scoring needs at least two models",
            reports[0].model
        )));
    }
    let board = score(&reports, &map)?;
    report::write_metrics(&reports_dir.join("metrics.csv"), &reports)?;
    report::write_zscores(&reports_dir.join("zscores.csv"), &board)?;
    report::write_radar(&reports_dir.join("radar.json"), &board)?;
    report::write_ranking(&reports_dir.join("ranking.csv"), &board.ranking)?;
    if cfg.evaluate.plot {
        report::write_ranking_svg(&reports_dir.join("ranking.svg"), &board.ranking)?;
    }
    if cfg.evaluate.dump_trajectories {
        for run in &runs {
            let dir = layout.trajectories().join(sanitize(&run.name));
            mkdir(&dir)?;
            for t in &run.trajectories {
                report::write_trajectory(&dir.join(format!("{}.csv", sanitize(&t.segment_id))), t)?;
            }
        }
    }
    Ok(EvaluationOutcome {
        ranking: board.ranking,
        reports,
        failures,
        unscored,
    })
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Generates every segment of `spec` and chains them into one raw recording
/// separated by `spec.gap` seconds.
pub fn synthesize(spec: &SynthSpec, bounds: cfbench_core::AccelerationBounds) -> Result<Vec<RawObservation>> {
    if spec.segments.is_empty() {
        return Err(Error::Config("synthetic spec has no segments".into()));
    }
    let mut obs = Vec::new();
    let (mut t_offset, mut x_offset) = (0.0, 0.0);
    for (i, s) in spec.segments.iter().enumerate() {
        let seg = generate_synthetic(&SyntheticConfig {
            id: format!("synth-{i}"),
            profile: s.profile,
            follower: s.follower,
            noise_sigma: spec.noise_sigma,
            duration: s.duration,
            dt: spec.dt,
            seed: spec.seed.wrapping_add(i as u64),
            initial_gap: s.initial_gap,
            bounds,
            t_offset,
            x_offset,
        })?;
        obs.extend(seg.samples.iter().map(|p| RawObservation::new(p.t, p.x_l, p.x_f)));
        let last = seg.samples.last().expect("non-empty segment");
        t_offset = last.t + spec.gap;
        x_offset = last.x_l + last.v_l * spec.gap;
    }
    Ok(obs)
}

pub fn synth(spec: &SynthSpec, bounds: cfbench_core::AccelerationBounds, path: &Path) -> Result<usize> {
    let obs = synthesize(spec, bounds)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        mkdir(parent)?;
    }
    write_observations(path, &obs)?;
    Ok(obs.len())
}
