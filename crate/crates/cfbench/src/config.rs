//! Run configuration (TOML). Every field has a default, so an empty file is a
//! valid configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cfbench_core::calibration::{default_parameter_bounds, GaConfig, ParamRange, SearchBudget, SearchSpace, DEFAULT_FOLDS};
use cfbench_core::dataio::{LeaderProfile, OutlierLimits, SegmentationConfig, SplitRatios, SyntheticFollower};
use cfbench_core::learners::{FnnHyperparameters, GbtHyperparameters, Hyperparameters, LearnerKind, RfHyperparameters};
use cfbench_core::metrics::{Category, Metric, MetricConfig, DEFAULT_FFT_CUTOFF};
use cfbench_core::models::oracle::OracleKind;
use cfbench_core::models::{AccelerationBounds, IdmParameters, PhysicsKind};
use cfbench_core::scoring::CategoryMap;
use cfbench_core::smoothing::KalmanConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ColumnMapping;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "CFBENCH_OUT";
pub const DEFAULT_OUT: &str = "cfbench-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    /// Simulation step, s.
    pub dt: f64,
    pub bounds: AccelerationBounds,
    pub input: InputConfig,
    pub cleaning: CleaningConfig,
    pub kalman: KalmanOverrides,
    pub split: SplitRatios,
    pub calibrate: CalibrateConfig,
    pub train: TrainConfig,
    pub evaluate: EvaluateConfig,
    pub synth: SynthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: None,
            seed: 42,
            dt: cfbench_core::DEFAULT_DT,
            bounds: AccelerationBounds::default(),
            input: InputConfig::default(),
            cleaning: CleaningConfig::default(),
            kalman: KalmanOverrides::default(),
            split: SplitRatios::default(),
            calibrate: CalibrateConfig::default(),
            train: TrainConfig::default(),
            evaluate: EvaluateConfig::default(),
            synth: SynthSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub paths: Vec<PathBuf>,
    pub delimiter: char,
    pub columns: ColumnMapping,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            paths: Vec::new(),
            delimiter: ',',
            columns: ColumnMapping::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningConfig {
    pub gap_threshold: f64,
    pub min_duration: f64,
    pub v_max: f64,
    pub a_max: f64,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        let s = SegmentationConfig::default();
        let o = OutlierLimits::default();
        Self {
            gap_threshold: s.gap_threshold,
            min_duration: s.min_duration,
            v_max: o.v_max,
            a_max: o.a_max,
        }
    }
}

impl CleaningConfig {
    pub fn segmentation(&self) -> SegmentationConfig {
        SegmentationConfig {
            gap_threshold: self.gap_threshold,
            min_duration: self.min_duration,
        }
    }

    pub fn limits(&self) -> OutlierLimits {
        OutlierLimits {
            v_max: self.v_max,
            a_max: self.a_max,
        }
    }
}

/// Kalman settings as diagonals; also the format of a standalone override
/// file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanOverrides {
    pub enabled: bool,
    pub q: [f64; 3],
    pub r: f64,
    pub initial_covariance: [f64; 3],
}

impl Default for KalmanOverrides {
    fn default() -> Self {
        let k = KalmanConfig::default();
        Self {
            enabled: true,
            q: [k.q[0][0], k.q[1][1], k.q[2][2]],
            r: k.r,
            initial_covariance: [k.initial_covariance[0][0], k.initial_covariance[1][1], k.initial_covariance[2][2]],
        }
    }
}

impl KalmanOverrides {
    pub fn to_config(&self) -> Result<KalmanConfig> {
        KalmanConfig::from_diagonals(self.q, self.r, self.initial_covariance).map_err(|e| Error::Config(format!("kalman: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    pub models: Vec<PhysicsKind>,
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub mutation_scale: f64,
    pub elitism: usize,
    /// Clamp predictions to `bounds` inside the fitness.
    pub clamp_fitness: bool,
    /// Per model, per parameter `[lo, hi]`; unlisted parameters keep the
    /// default range.
    pub bounds: BTreeMap<PhysicsKind, BTreeMap<String, [f64; 2]>>,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        let g = GaConfig::new(PhysicsKind::Idm, 0);
        Self {
            models: vec![PhysicsKind::Idm, PhysicsKind::Acc],
            population_size: g.population_size,
            generations: g.generations,
            crossover_rate: g.crossover_rate,
            mutation_rate: g.mutation_rate,
            mutation_scale: g.mutation_scale,
            elitism: g.elitism,
            clamp_fitness: true,
            bounds: BTreeMap::new(),
        }
    }
}

impl CalibrateConfig {
    pub fn ga_config(&self, kind: PhysicsKind, seed: u64, accel: AccelerationBounds) -> Result<GaConfig> {
        let mut pb = default_parameter_bounds(kind);
        if let Some(over) = self.bounds.get(&kind) {
            let names = kind.parameter_names();
            for (name, [lo, hi]) in over {
                let i = names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| Error::Config(format!("{kind} has no parameter `{name}`")))?;
                if !(lo < hi) {
                    return Err(Error::Config(format!("{kind}.{name}: bounds [{lo}, {hi}] need lo < hi")));
                }
                pb[i] = (*lo, *hi);
            }
        }
        let cfg = GaConfig {
            population_size: self.population_size,
            generations: self.generations,
            crossover_rate: self.crossover_rate,
            mutation_rate: self.mutation_rate,
            mutation_scale: self.mutation_scale,
            parameter_bounds: pb,
            seed,
            elitism: self.elitism,
            accel_bounds: self.clamp_fitness.then_some(accel),
        };
        cfg.validate(kind.parameter_names().len()).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub models: Vec<LearnerKind>,
    /// Random-search trials per learner; 0 skips the search and fits the
    /// hyperparameters below directly.
    pub n_trials: usize,
    pub prune: bool,
    pub n_folds: usize,
    pub gbt: GbtHyperparameters,
    pub rf: RfHyperparameters,
    pub fnn: FnnHyperparameters,
    /// Per learner, ranges replacing the default search space entries.
    pub space: BTreeMap<LearnerKind, BTreeMap<String, ParamRange>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            models: LearnerKind::ALL.to_vec(),
            n_trials: SearchBudget::default().n_trials,
            prune: true,
            n_folds: DEFAULT_FOLDS,
            gbt: GbtHyperparameters::default(),
            rf: RfHyperparameters::default(),
            fnn: FnnHyperparameters::default(),
            space: BTreeMap::new(),
        }
    }
}

impl TrainConfig {
    pub fn hyperparameters(&self, kind: LearnerKind) -> Hyperparameters {
        match kind {
            LearnerKind::Gbt => Hyperparameters::Gbt(self.gbt),
            LearnerKind::Rf => Hyperparameters::Rf(self.rf),
            LearnerKind::Fnn => Hyperparameters::Fnn(self.fnn),
        }
    }

    pub fn search_space(&self, kind: LearnerKind) -> SearchSpace {
        let mut s = SearchSpace::default_for(kind);
        if let Some(over) = self.space.get(&kind) {
            for (k, r) in over {
                s.ranges.insert(k.clone(), *r);
            }
        }
        s
    }

    pub fn budget(&self) -> SearchBudget {
        SearchBudget {
            n_trials: self.n_trials,
            prune: self.prune,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSpec {
    pub name: String,
    /// Program followed by its arguments.
    pub command: Vec<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub name: String,
    pub oracle: OracleKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Native models: idm, acc, gbt, rf, fnn.
    pub models: Vec<String>,
    pub external: Vec<ExternalSpec>,
    pub oracles: Vec<OracleSpec>,
    /// Which split to evaluate on.
    pub split: String,
    pub fft_cutoff: f64,
    pub dump_trajectories: bool,
    pub plot: bool,
    /// Category name to metric names; replaces the default grouping.
    pub categories: Option<BTreeMap<String, Vec<String>>>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            models: ["idm", "acc", "gbt", "rf", "fnn"].map(String::from).to_vec(),
            external: Vec::new(),
            oracles: Vec::new(),
            split: "test".into(),
            fft_cutoff: DEFAULT_FFT_CUTOFF,
            dump_trajectories: true,
            plot: false,
            categories: None,
        }
    }
}

impl EvaluateConfig {
    pub fn metric_config(&self) -> MetricConfig {
        MetricConfig {
            fft_cutoff: self.fft_cutoff,
        }
    }

    pub fn category_map(&self) -> Result<CategoryMap> {
        let Some(cats) = &self.categories else {
            return Ok(CategoryMap::default());
        };
        let mut entries = Vec::new();
        for (c, ms) in cats {
            let cat = Category::parse(c).ok_or_else(|| Error::Config(format!("unknown category `{c}`")))?;
            let metrics = ms
                .iter()
                .map(|m| Metric::parse(m).ok_or_else(|| Error::Config(format!("unknown metric `{m}`"))))
                .collect::<Result<Vec<_>>>()?;
            entries.push((cat, metrics));
        }
        entries.sort_by_key(|(c, _)| *c);
        let map = CategoryMap { entries };
        map.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(map)
    }
}

/// Parses `[name=]perfect`, `biased:<offset>`, `noisy:<sigma>[:<seed>]` or
/// `lagged:<steps>`.
pub fn parse_oracle(spec: &str) -> Result<OracleSpec> {
    let (name, body) = match spec.split_once('=') {
        Some((n, b)) => (n.trim().to_string(), b.trim()),
        None => (format!("oracle-{}", spec.trim().replace(':', "-")), spec.trim()),
    };
    let parts: Vec<&str> = body.split(':').collect();
    let num = |i: usize| -> Result<f64> {
        parts
            .get(i)
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Config(format!("oracle `{spec}`: expected a number in position {i}")))
    };
    let oracle = match parts[0] {
        "perfect" => OracleKind::Perfect,
        "biased" => OracleKind::Biased { offset: num(1)? },
        "noisy" => OracleKind::Noisy {
            sigma: num(1)?,
            seed: if parts.len() > 2 { num(2)? as u64 } else { 0 },
        },
        "lagged" => OracleKind::Lagged { steps: num(1)? as usize },
        other => return Err(Error::Config(format!("unknown oracle kind `{other}`"))),
    };
    Ok(OracleSpec { name, oracle })
}

/// Parses `name=program arg ...` (whitespace-separated, no shell quoting).
pub fn parse_external(spec: &str) -> Result<ExternalSpec> {
    let (name, cmd) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("external model `{spec}` is not name=command")))?;
    let command: Vec<String> = cmd.split_whitespace().map(String::from).collect();
    if name.trim().is_empty() || command.is_empty() {
        return Err(Error::Config(format!("external model `{spec}` needs a name and a command")));
    }
    Ok(ExternalSpec {
        name: name.trim().to_string(),
        command,
        timeout_ms: default_timeout_ms(),
    })
}

/// Multi-segment synthetic dataset description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub dt: f64,
    /// Position noise std on both vehicles, m.
    pub noise_sigma: f64,
    /// Recording gap inserted between consecutive segments, s.
    pub gap: f64,
    pub segments: Vec<SynthSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSegment {
    pub profile: LeaderProfile,
    #[serde(default = "default_follower")]
    pub follower: SyntheticFollower,
    pub duration: f64,
    #[serde(default)]
    pub initial_gap: Option<f64>,
}

fn default_follower() -> SyntheticFollower {
    SyntheticFollower::Idm(IdmParameters::default())
}

impl Default for SynthSpec {
    fn default() -> Self {
        let profiles = [
            LeaderProfile::StopAndGo {
                base_speed: 5.0,
                amplitude: 3.0,
                period: 60.0,
            },
            LeaderProfile::Sinusoidal {
                base_speed: 6.0,
                amplitude: 1.5,
                period: 45.0,
            },
            LeaderProfile::Constant { speed: 7.0 },
        ];
        Self {
            seed: 7,
            dt: 0.5,
            noise_sigma: 0.1,
            gap: 10.0,
            segments: (0..8)
                .map(|i| SynthSegment {
                    profile: profiles[i % 3],
                    follower: default_follower(),
                    duration: 120.0 + 20.0 * i as f64,
                    initial_gap: None,
                })
                .collect(),
        }
    }
}

pub fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl RunConfig {
    /// Relative input paths and output directory are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in &mut cfg.input.paths {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(o) = &mut cfg.output_dir {
            if o.is_relative() {
                *o = base.join(&*o);
            }
        }
        Ok(cfg)
    }

    /// `--out` flag, then the config file, then `$CFBENCH_OUT`, then
    /// `./cfbench-out`.
    pub fn resolve_output(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output_dir {
            return p.clone();
        }
        match std::env::var_os(OUT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => PathBuf::from(DEFAULT_OUT),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c: RunConfig = toml::from_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.kalman.q, [0.1, 0.01, 0.001]);
        assert_eq!(c.kalman.r, 0.5);
        assert_eq!(c.train.n_trials, 500);
        assert_eq!(c.train.n_folds, 5);
    }

    #[test]
    fn default_config_round_trips() {
        let c = RunConfig::default();
        let text = toml::to_string_pretty(&c).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
    }

    #[test]
    fn bounds_overrides() {
        let c: RunConfig = toml::from_str("[calibrate.bounds.idm]\nv0 = [8.0, 16.0]\n").unwrap();
        let ga = c.calibrate.ga_config(PhysicsKind::Idm, 1, c.bounds).unwrap();
        assert_eq!(ga.parameter_bounds[0], (8.0, 16.0));
        let c: RunConfig = toml::from_str("[calibrate.bounds.idm]\nv0 = [16.0, 8.0]\n").unwrap();
        assert!(matches!(c.calibrate.ga_config(PhysicsKind::Idm, 1, c.bounds), Err(Error::Config(_))));
        let c: RunConfig = toml::from_str("[calibrate.bounds.acc]\nv0 = [1.0, 2.0]\n").unwrap();
        assert!(c.calibrate.ga_config(PhysicsKind::Acc, 1, c.bounds).is_err());
    }

    #[test]
    fn oracle_specs() {
        assert_eq!(parse_oracle("perfect").unwrap().oracle, OracleKind::Perfect);
        let o = parse_oracle("b=biased:0.2").unwrap();
        assert_eq!(o.name, "b");
        assert_eq!(o.oracle, OracleKind::Biased { offset: 0.2 });
        assert_eq!(parse_oracle("noisy:0.3:7").unwrap().oracle, OracleKind::Noisy { sigma: 0.3, seed: 7 });
        assert_eq!(parse_oracle("lagged:2").unwrap().oracle, OracleKind::Lagged { steps: 2 });
        assert!(parse_oracle("biased").is_err());
        assert!(parse_oracle("psychic:1").is_err());
    }

    #[test]
    fn oracle_table_form() {
        let c: RunConfig = toml::from_str(
            "[[evaluate.oracles]]\nname = \"lag\"\noracle = { kind = \"lagged\", steps = 2 }\n",
        )
        .unwrap();
        assert_eq!(c.evaluate.oracles[0].oracle, OracleKind::Lagged { steps: 2 });
    }

    #[test]
    fn category_map_from_config() {
        let c: RunConfig = toml::from_str("[evaluate.categories]\nerror = [\"rmse\"]\nsimilarity = [\"ks\", \"dtw\"]\n").unwrap();
        let m = c.evaluate.category_map().unwrap();
        assert_eq!(m.entries.len(), 2);
        let c: RunConfig = toml::from_str("[evaluate.categories]\nerror = []\n").unwrap();
        assert!(c.evaluate.category_map().is_err());
    }

    #[test]
    fn synth_spec_parses() {
        let s: SynthSpec = toml::from_str(
            "seed = 3\n[[segments]]\nduration = 90.0\nprofile = { kind = \"constant\", speed = 5.0 }\n",
        )
        .unwrap();
        assert_eq!(s.segments.len(), 1);
        assert_eq!(s.segments[0].follower, default_follower());
    }
}
