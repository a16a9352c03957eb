//! Bagged regression trees with mean aggregation.

use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, Criterion, Tree, TreeParams, N_FEATURES};
use super::LearnerError;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfHyperparameters {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features drawn per split.
    pub feature_subsample: f64,
}

impl Default for RfHyperparameters {
    fn default() -> Self {
        Self {
            n_trees: 776,
            max_depth: 146,
            min_samples_split: 5,
            min_samples_leaf: 3,
            feature_subsample: 1.0,
        }
    }
}

impl RfHyperparameters {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::InvalidHyperparameters(m.into()));
        if self.n_trees == 0 || self.max_depth == 0 {
            return bad("n_trees and max_depth must be at least 1");
        }
        if !(self.feature_subsample > 0.0 && self.feature_subsample <= 1.0) {
            return bad("feature_subsample must lie in (0, 1]");
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        let k = math::round(self.feature_subsample * N_FEATURES as f64) as usize;
        TreeParams {
            criterion: Criterion::Variance,
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            max_features: k.clamp(1, N_FEATURES),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn predict(&self, x: &[f64; N_FEATURES]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Fits tree `index` of a forest. Each tree draws from its own ChaCha stream,
/// so trees can be fit in any order or in parallel with identical results.
pub fn fit_forest_tree(
    x: &[[f64; N_FEATURES]],
    y: &[f64],
    hp: &RfHyperparameters,
    seed: u64,
    index: usize,
) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    let n = y.len() as u32;
    let rows: Vec<u32> = (0..n).map(|_| rng.random_range(0..n)).collect();
    fit_tree(x, y, &rows, hp.tree_params(), Some(&mut rng))
}

pub(crate) fn fit(x: &[[f64; N_FEATURES]], y: &[f64], hp: &RfHyperparameters, seed: u64) -> Forest {
    Forest {
        trees: (0..hp.n_trees).map(|i| fit_forest_tree(x, y, hp, seed, i)).collect(),
    }
}
