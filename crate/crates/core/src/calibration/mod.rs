//! Parameter calibration: genetic-algorithm fitting of physics models,
//! expanding-window cross-validation and seeded random hyperparameter search.

use alloc::string::String;
use alloc::vec::Vec;

use crate::learners::LearnerError;

mod cv;
mod ga;
mod search;

pub use cv::{make_cv_plan, CvFold, CvPlan, DEFAULT_FOLDS};
pub use ga::{
    calibrate_ga, default_parameter_bounds, physics_fitness, GaConfig, GaResult,
};
pub use search::{
    tune_hyperparameters, ParamRange, SearchBudget, SearchResult, SearchSpace, TrialRecord,
    TrialStatus, DEFAULT_TRIALS,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("insufficient data: need at least {needed} pairs, got {got}")]
    Insufficient { needed: usize, got: usize },
    #[error("pairs are not in strictly increasing time order at index {0}")]
    Unsorted(usize),
    #[error("every one of {} trials was pruned or failed", .0.len())]
    SearchFailed(Vec<TrialRecord>),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}
