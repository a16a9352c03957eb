//! Gradient-boosted regression trees on squared error.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, Criterion, Tree, TreeParams, N_FEATURES};
use super::LearnerError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtHyperparameters {
    pub learning_rate: f64,
    pub n_rounds: usize,
    pub max_depth: usize,
    pub l1_reg: f64,
    pub min_samples_leaf: usize,
}

impl Default for GbtHyperparameters {
    fn default() -> Self {
        Self {
            learning_rate: 0.477,
            n_rounds: 125,
            max_depth: 6,
            l1_reg: 0.946,
            min_samples_leaf: 1,
        }
    }
}

impl GbtHyperparameters {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::InvalidHyperparameters(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if self.n_rounds == 0 || self.max_depth == 0 {
            return bad("n_rounds and max_depth must be at least 1");
        }
        if !(self.l1_reg >= 0.0) || !self.l1_reg.is_finite() {
            return bad("l1_reg must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtEnsemble {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl GbtEnsemble {
    pub fn predict(&self, x: &[f64; N_FEATURES]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

/// Returns the ensemble and the training MSE after each round (index 0 is the
/// base prediction).
pub(crate) fn fit(
    x: &[[f64; N_FEATURES]],
    y: &[f64],
    hp: &GbtHyperparameters,
) -> (GbtEnsemble, Vec<f64>) {
    let n = y.len() as f64;
    let base = y.iter().sum::<f64>() / n;
    let mut pred = alloc::vec![base; y.len()];
    let mse = |pred: &[f64]| y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let mut curve = alloc::vec![mse(&pred)];
    let params = TreeParams {
        criterion: Criterion::L1Gradient { alpha: hp.l1_reg },
        max_depth: hp.max_depth,
        min_samples_split: 2,
        min_samples_leaf: hp.min_samples_leaf,
        max_features: N_FEATURES,
    };
    let rows: Vec<u32> = (0..y.len() as u32).collect();
    let mut trees = Vec::with_capacity(hp.n_rounds);
    for _ in 0..hp.n_rounds {
        let residual: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        let tree = fit_tree::<ChaCha8Rng>(x, &residual, &rows, params, None);
        for (p, xi) in pred.iter_mut().zip(x) {
            *p += hp.learning_rate * tree.predict(xi);
        }
        curve.push(mse(&pred));
        trees.push(tree);
    }
    (
        GbtEnsemble {
            base,
            learning_rate: hp.learning_rate,
            trees,
        },
        curve,
    )
}
