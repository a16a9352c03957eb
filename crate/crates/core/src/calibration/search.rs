use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CalibrationError, CvPlan};
use crate::dataio::FeatureSet;
use crate::learners::{self, Hyperparameters, LearnerKind};
use crate::math;

pub const DEFAULT_TRIALS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum ParamRange {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    /// Inclusive integer range.
    Int { lo: i64, hi: i64 },
}

impl ParamRange {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            ParamRange::Uniform { lo, hi } => rng.random_range(lo..=hi),
            ParamRange::LogUniform { lo, hi } => math::exp(rng.random_range(math::ln(lo)..=math::ln(hi))),
            ParamRange::Int { lo, hi } => rng.random_range(lo..=hi) as f64,
        }
    }

    fn clip(&self, v: f64) -> f64 {
        match *self {
            ParamRange::Uniform { lo, hi } | ParamRange::LogUniform { lo, hi } => v.clamp(lo, hi),
            ParamRange::Int { lo, hi } => math::round(v).clamp(lo as f64, hi as f64),
        }
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            ParamRange::Uniform { lo, hi } if lo.is_finite() && hi.is_finite() && lo <= hi => Ok(()),
            ParamRange::LogUniform { lo, hi } if lo > 0.0 && hi.is_finite() && lo <= hi => Ok(()),
            ParamRange::Int { lo, hi } if lo <= hi => Ok(()),
            r => Err(format!("invalid range {r:?}")),
        }
    }
}

/// Named hyperparameter ranges for one learner; names not listed keep their
/// default value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub kind: LearnerKind,
    pub ranges: BTreeMap<String, ParamRange>,
}

fn names(kind: LearnerKind) -> &'static [&'static str] {
    match kind {
        LearnerKind::Gbt => &["learning_rate", "n_rounds", "max_depth", "l1_reg", "min_samples_leaf"],
        LearnerKind::Rf => &["n_trees", "max_depth", "min_samples_split", "min_samples_leaf", "feature_subsample"],
        LearnerKind::Fnn => &["n_layers", "units_per_layer", "dropout", "learning_rate", "batch_size", "epochs"],
    }
}

fn get(hp: &Hyperparameters, name: &str) -> f64 {
    match hp {
        Hyperparameters::Gbt(h) => match name {
            "learning_rate" => h.learning_rate,
            "n_rounds" => h.n_rounds as f64,
            "max_depth" => h.max_depth as f64,
            "l1_reg" => h.l1_reg,
            _ => h.min_samples_leaf as f64,
        },
        Hyperparameters::Rf(h) => match name {
            "n_trees" => h.n_trees as f64,
            "max_depth" => h.max_depth as f64,
            "min_samples_split" => h.min_samples_split as f64,
            "min_samples_leaf" => h.min_samples_leaf as f64,
            _ => h.feature_subsample,
        },
        Hyperparameters::Fnn(h) => match name {
            "n_layers" => h.n_layers as f64,
            "units_per_layer" => h.units_per_layer as f64,
            "dropout" => h.dropout,
            "learning_rate" => h.learning_rate,
            "batch_size" => h.batch_size as f64,
            _ => h.epochs as f64,
        },
    }
}

fn set(hp: &mut Hyperparameters, name: &str, v: f64) {
    let u = v.max(0.0) as usize;
    match hp {
        Hyperparameters::Gbt(h) => match name {
            "learning_rate" => h.learning_rate = v,
            "n_rounds" => h.n_rounds = u,
            "max_depth" => h.max_depth = u,
            "l1_reg" => h.l1_reg = v,
            _ => h.min_samples_leaf = u,
        },
        Hyperparameters::Rf(h) => match name {
            "n_trees" => h.n_trees = u,
            "max_depth" => h.max_depth = u,
            "min_samples_split" => h.min_samples_split = u,
            "min_samples_leaf" => h.min_samples_leaf = u,
            _ => h.feature_subsample = v,
        },
        Hyperparameters::Fnn(h) => match name {
            "n_layers" => h.n_layers = u,
            "units_per_layer" => h.units_per_layer = u,
            "dropout" => h.dropout = v,
            "learning_rate" => h.learning_rate = v,
            "batch_size" => h.batch_size = u,
            _ => h.epochs = u,
        },
    }
}

impl SearchSpace {
    pub fn default_for(kind: LearnerKind) -> Self {
        use ParamRange::*;
        let r: Vec<(&str, ParamRange)> = match kind {
            LearnerKind::Gbt => alloc::vec![
                ("learning_rate", LogUniform { lo: 0.01, hi: 1.0 }),
                ("n_rounds", Int { lo: 20, hi: 300 }),
                ("max_depth", Int { lo: 2, hi: 10 }),
                ("l1_reg", Uniform { lo: 0.0, hi: 2.0 }),
                ("min_samples_leaf", Int { lo: 1, hi: 20 }),
            ],
            LearnerKind::Rf => alloc::vec![
                ("n_trees", Int { lo: 20, hi: 800 }),
                ("max_depth", Int { lo: 4, hi: 160 }),
                ("min_samples_split", Int { lo: 2, hi: 20 }),
                ("min_samples_leaf", Int { lo: 1, hi: 10 }),
                ("feature_subsample", Uniform { lo: 0.25, hi: 1.0 }),
            ],
            LearnerKind::Fnn => alloc::vec![
                ("n_layers", Int { lo: 1, hi: 5 }),
                ("units_per_layer", Int { lo: 8, hi: 64 }),
                ("dropout", Uniform { lo: 0.0, hi: 0.3 }),
                ("learning_rate", LogUniform { lo: 1e-4, hi: 0.05 }),
                ("batch_size", Int { lo: 16, hi: 128 }),
                ("epochs", Int { lo: 5, hi: 40 }),
            ],
        };
        Self {
            kind,
            ranges: r.into_iter().map(|(k, v)| (String::from(k), v)).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let known = names(self.kind);
        for (name, r) in &self.ranges {
            if !known.contains(&name.as_str()) {
                return Err(CalibrationError::Config(format!(
                    "unknown {} hyperparameter `{name}`",
                    self.kind
                )));
            }
            r.validate().map_err(|e| CalibrationError::Config(format!("{name}: {e}")))?;
        }
        Ok(())
    }

    fn build(&self, values: &BTreeMap<String, f64>) -> Hyperparameters {
        let mut hp = Hyperparameters::defaults(self.kind);
        for (k, v) in values {
            set(&mut hp, k, *v);
        }
        hp
    }

    fn sample(&self, rng: &mut impl Rng) -> BTreeMap<String, f64> {
        self.ranges.iter().map(|(k, r)| (k.clone(), r.sample(rng))).collect()
    }

    /// The learner's default hyperparameters, clipped into the space.
    fn defaults_clipped(&self) -> BTreeMap<String, f64> {
        let d = Hyperparameters::defaults(self.kind);
        self.ranges.iter().map(|(k, r)| (k.clone(), r.clip(get(&d, k)))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub n_trials: usize,
    /// Prune a trial whose first-fold loss exceeds the median first-fold loss
    /// of the completed trials.
    pub prune: bool,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            n_trials: DEFAULT_TRIALS,
            prune: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum TrialStatus {
    Complete,
    Pruned,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub values: BTreeMap<String, f64>,
    pub hyperparameters: Hyperparameters,
    pub fold_losses: Vec<f64>,
    /// Mean validation MSE over folds; only for completed trials.
    pub mean_loss: Option<f64>,
    pub status: TrialStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Hyperparameters,
    pub best_trial: usize,
    pub best_loss: f64,
    pub trials: Vec<TrialRecord>,
}

/// Seeded random search. Trial 0 evaluates the learner's default
/// hyperparameters; later trials sample the space from their own RNG stream.
pub fn tune_hyperparameters(
    space: &SearchSpace,
    budget: &SearchBudget,
    plan: &CvPlan,
    data: &FeatureSet,
    seed: u64,
) -> Result<SearchResult, CalibrationError> {
    space.validate()?;
    if budget.n_trials == 0 {
        return Err(CalibrationError::Config("n_trials must be at least 1".into()));
    }
    if plan.n_pairs != data.len() || plan.folds.is_empty() {
        return Err(CalibrationError::Config(format!(
            "plan covers {} pairs but the data has {}",
            plan.n_pairs,
            data.len()
        )));
    }
    let mut trials: Vec<TrialRecord> = Vec::with_capacity(budget.n_trials);
    let mut completed_first: Vec<f64> = Vec::new();
    for index in 0..budget.n_trials {
        let values = if index == 0 {
            space.defaults_clipped()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64);
            space.sample(&mut rng)
        };
        let hp = space.build(&values);
        let mut rec = TrialRecord {
            index,
            values,
            hyperparameters: hp,
            fold_losses: Vec::new(),
            mean_loss: None,
            status: TrialStatus::Complete,
        };
        for (k, fold) in plan.folds.iter().enumerate() {
            let train = data.slice(fold.train.clone());
            let val = data.slice(fold.validation.clone());
            let model = match learners::fit(&train.states, &train.targets, &hp, seed) {
                Ok(m) => m,
                Err(e) => {
                    rec.status = TrialStatus::Failed(format!("fold {k}: {e}"));
                    break;
                }
            };
            let loss = val
                .states
                .iter()
                .zip(&val.targets)
                .map(|(s, y)| {
                    let e = model.predict_state(s) - y;
                    e * e
                })
                .sum::<f64>()
                / val.len() as f64;
            if !loss.is_finite() {
                rec.status = TrialStatus::Failed(format!("fold {k}: non-finite loss"));
                break;
            }
            rec.fold_losses.push(loss);
            if k == 0 && budget.prune {
                if let Some(med) = math::median(&completed_first) {
                    if loss > med {
                        rec.status = TrialStatus::Pruned;
                        break;
                    }
                }
            }
        }
        if rec.status == TrialStatus::Complete {
            completed_first.push(rec.fold_losses[0]);
            rec.mean_loss = Some(math::mean(&rec.fold_losses));
        }
        trials.push(rec);
    }
    let best = trials
        .iter()
        .filter_map(|t| t.mean_loss.map(|l| (l, t.index)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    match best {
        Some((loss, i)) => Ok(SearchResult {
            best: trials[i].hyperparameters,
            best_trial: i,
            best_loss: loss,
            trials,
        }),
        None => Err(CalibrationError::SearchFailed(trials)),
    }
}
