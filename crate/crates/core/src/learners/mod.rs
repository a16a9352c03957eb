//! Trainable regressors mapping a [`CarFollowingState`] to acceleration:
//! gradient-boosted trees, random forest and a feedforward network.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::dataio::CarFollowingState;
use crate::math;
use crate::models::{CarFollowingModel, ModelError, StateError};

pub mod fnn;
pub mod forest;
pub mod gbt;
pub mod tree;

pub use fnn::{gradient_check, FnnHyperparameters, Network};
pub use forest::{fit_forest_tree, Forest, RfHyperparameters};
pub use gbt::{GbtEnsemble, GbtHyperparameters};
pub use tree::Tree;

use tree::N_FEATURES;

pub const MIN_TREE_PAIRS: usize = 50;
pub const MIN_FNN_PAIRS: usize = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnerError {
    #[error("need at least {needed} training pairs, got {got}")]
    Insufficient { needed: usize, got: usize },
    #[error("states and targets differ in length ({states} vs {targets})")]
    Mismatch { states: usize, targets: usize },
    #[error("training data contains a non-finite value at pair {0}")]
    NonFinite(usize),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Gbt,
    Rf,
    Fnn,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 3] = [LearnerKind::Gbt, LearnerKind::Rf, LearnerKind::Fnn];

    pub fn as_str(&self) -> &'static str {
        match self {
            LearnerKind::Gbt => "gbt",
            LearnerKind::Rf => "rf",
            LearnerKind::Fnn => "fnn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn min_pairs(&self) -> usize {
        match self {
            LearnerKind::Fnn => MIN_FNN_PAIRS,
            _ => MIN_TREE_PAIRS,
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-feature affine scaling fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population std; zero-spread features keep a scale of 1.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(columns: &[Vec<f64>]) -> Self {
        let mean = columns.iter().map(|c| math::mean(c)).collect();
        let scale = columns
            .iter()
            .map(|c| {
                let s = math::std_pop(c);
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mean: alloc::vec![0.0; n],
            scale: alloc::vec![1.0; n],
        }
    }

    pub fn transform(&self, i: usize, v: f64) -> f64 {
        (v - self.mean[i]) / self.scale[i]
    }

    pub fn inverse(&self, i: usize, z: f64) -> f64 {
        z * self.scale[i] + self.mean[i]
    }
}

/// Hyperparameters of whichever learner was trained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyperparameters {
    Gbt(GbtHyperparameters),
    Rf(RfHyperparameters),
    Fnn(FnnHyperparameters),
}

impl Hyperparameters {
    pub fn kind(&self) -> LearnerKind {
        match self {
            Hyperparameters::Gbt(_) => LearnerKind::Gbt,
            Hyperparameters::Rf(_) => LearnerKind::Rf,
            Hyperparameters::Fnn(_) => LearnerKind::Fnn,
        }
    }

    pub fn defaults(kind: LearnerKind) -> Self {
        match kind {
            LearnerKind::Gbt => Hyperparameters::Gbt(GbtHyperparameters::default()),
            LearnerKind::Rf => Hyperparameters::Rf(RfHyperparameters::default()),
            LearnerKind::Fnn => Hyperparameters::Fnn(FnnHyperparameters::default()),
        }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        match self {
            Hyperparameters::Gbt(h) => h.validate(),
            Hyperparameters::Rf(h) => h.validate(),
            Hyperparameters::Fnn(h) => h.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Fitted {
    Constant(f64),
    Gbt(GbtEnsemble),
    Rf(Forest),
    Fnn(Network),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub seed: u64,
    pub n_pairs: usize,
    /// GBT: training MSE before the first and after each round. FNN: mean
    /// batch loss per epoch (standardized units). RF: empty.
    pub loss_curve: Vec<f64>,
    pub train_mse: f64,
    pub max_train_residual: f64,
}

/// A fitted learner. Immutable after training; implements
/// [`CarFollowingModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedRegressor {
    pub name: String,
    pub hyperparameters: Hyperparameters,
    pub inputs: Standardizer,
    /// Target scaling (identity except for the network).
    pub target: Standardizer,
    pub fitted: Fitted,
    pub summary: TrainingSummary,
}

impl TrainedRegressor {
    pub fn kind(&self) -> LearnerKind {
        self.hyperparameters.kind()
    }

    /// Prediction on a raw feature vector `[dv, ds, a_prev, v_prev]`.
    pub fn predict_features(&self, x: &[f64; N_FEATURES]) -> f64 {
        let z: [f64; N_FEATURES] = core::array::from_fn(|i| self.inputs.transform(i, x[i]));
        let out = match &self.fitted {
            Fitted::Constant(c) => return *c,
            Fitted::Gbt(g) => g.predict(&z),
            Fitted::Rf(f) => f.predict(&z),
            Fitted::Fnn(n) => n.forward(&z),
        };
        self.target.inverse(0, out)
    }

    pub fn predict_state(&self, s: &CarFollowingState) -> f64 {
        self.predict_features(&s.to_array())
    }

    /// Builds a forest regressor from separately fitted trees (see
    /// [`fit_forest_tree`]), e.g. trees fit in parallel.
    pub fn from_forest_trees(
        name: impl Into<String>,
        data: &PreparedData,
        hp: RfHyperparameters,
        seed: u64,
        trees: Vec<Tree>,
    ) -> Self {
        let forest = Forest { trees };
        let fitted = if data.constant.is_some() {
            Fitted::Constant(data.y[0])
        } else {
            Fitted::Rf(forest)
        };
        data.finish(name.into(), Hyperparameters::Rf(hp), Standardizer::identity(1), fitted, seed, Vec::new())
    }
}

impl CarFollowingModel for TrainedRegressor {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&mut self, state: &CarFollowingState) -> Result<f64, ModelError> {
        if !state.to_array().iter().all(|v| v.is_finite()) {
            return Err(ModelError::InvalidState(StateError::NonFinite));
        }
        Ok(self.predict_state(state))
    }
}

/// Validated, standardized training inputs.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub raw: Vec<[f64; N_FEATURES]>,
    pub x: Vec<[f64; N_FEATURES]>,
    pub y: Vec<f64>,
    pub inputs: Standardizer,
    /// Set when every target is identical.
    pub constant: Option<f64>,
}

impl PreparedData {
    pub fn new(states: &[CarFollowingState], targets: &[f64], min_pairs: usize) -> Result<Self, LearnerError> {
        if states.len() != targets.len() {
            return Err(LearnerError::Mismatch {
                states: states.len(),
                targets: targets.len(),
            });
        }
        if states.len() < min_pairs {
            return Err(LearnerError::Insufficient {
                needed: min_pairs,
                got: states.len(),
            });
        }
        let raw: Vec<[f64; N_FEATURES]> = states.iter().map(CarFollowingState::to_array).collect();
        for (i, (r, y)) in raw.iter().zip(targets).enumerate() {
            if !y.is_finite() || r.iter().any(|v| !v.is_finite()) {
                return Err(LearnerError::NonFinite(i));
            }
        }
        let columns: Vec<Vec<f64>> = (0..N_FEATURES).map(|f| raw.iter().map(|r| r[f]).collect()).collect();
        let inputs = Standardizer::fit(&columns);
        let x = raw
            .iter()
            .map(|r| core::array::from_fn(|i| inputs.transform(i, r[i])))
            .collect();
        let constant = targets.iter().all(|v| *v == targets[0]).then_some(targets[0]);
        Ok(Self {
            raw,
            x,
            y: targets.to_vec(),
            inputs,
            constant,
        })
    }

    fn finish(
        &self,
        name: String,
        hyperparameters: Hyperparameters,
        target: Standardizer,
        fitted: Fitted,
        seed: u64,
        loss_curve: Vec<f64>,
    ) -> TrainedRegressor {
        let mut model = TrainedRegressor {
            name,
            hyperparameters,
            inputs: self.inputs.clone(),
            target,
            fitted,
            summary: TrainingSummary {
                seed,
                n_pairs: self.y.len(),
                loss_curve,
                train_mse: 0.0,
                max_train_residual: 0.0,
            },
        };
        let (mut sse, mut worst) = (0.0, 0.0f64);
        for (r, y) in self.raw.iter().zip(&self.y) {
            let e = model.predict_features(r) - y;
            sse += e * e;
            worst = worst.max(math::abs(e));
        }
        model.summary.train_mse = sse / self.y.len() as f64;
        model.summary.max_train_residual = worst;
        model
    }
}

pub fn fit_gbt(
    states: &[CarFollowingState],
    targets: &[f64],
    hp: &GbtHyperparameters,
    seed: u64,
) -> Result<TrainedRegressor, LearnerError> {
    hp.validate()?;
    let data = PreparedData::new(states, targets, MIN_TREE_PAIRS)?;
    let (fitted, curve) = match data.constant {
        Some(c) => (Fitted::Constant(c), Vec::new()),
        None => {
            let (ens, curve) = gbt::fit(&data.x, &data.y, hp);
            (Fitted::Gbt(ens), curve)
        }
    };
    Ok(data.finish("gbt".into(), Hyperparameters::Gbt(*hp), Standardizer::identity(1), fitted, seed, curve))
}

pub fn fit_rf(
    states: &[CarFollowingState],
    targets: &[f64],
    hp: &RfHyperparameters,
    seed: u64,
) -> Result<TrainedRegressor, LearnerError> {
    hp.validate()?;
    let data = PreparedData::new(states, targets, MIN_TREE_PAIRS)?;
    let trees = match data.constant {
        Some(_) => Vec::new(),
        None => forest::fit(&data.x, &data.y, hp, seed).trees,
    };
    Ok(TrainedRegressor::from_forest_trees("rf", &data, *hp, seed, trees))
}

pub fn fit_fnn(
    states: &[CarFollowingState],
    targets: &[f64],
    hp: &FnnHyperparameters,
    seed: u64,
) -> Result<TrainedRegressor, LearnerError> {
    hp.validate()?;
    let data = PreparedData::new(states, targets, MIN_FNN_PAIRS)?;
    let target = Standardizer::fit(core::slice::from_ref(&data.y));
    let y: Vec<f64> = data.y.iter().map(|v| target.transform(0, *v)).collect();
    let (net, curve) = fnn::fit(&data.x, &y, hp, seed)?;
    Ok(data.finish("fnn".into(), Hyperparameters::Fnn(*hp), target, Fitted::Fnn(net), seed, curve))
}

/// Dispatches on the hyperparameter kind.
pub fn fit(
    states: &[CarFollowingState],
    targets: &[f64],
    hp: &Hyperparameters,
    seed: u64,
) -> Result<TrainedRegressor, LearnerError> {
    match hp {
        Hyperparameters::Gbt(h) => fit_gbt(states, targets, h, seed),
        Hyperparameters::Rf(h) => fit_rf(states, targets, h, seed),
        Hyperparameters::Fnn(h) => fit_fnn(states, targets, h, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{idm_accel, AccelerationBounds, IdmParameters};
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_states(n: usize, seed: u64) -> Vec<CarFollowingState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| CarFollowingState {
                dv: rng.random_range(-3.0..3.0),
                ds: rng.random_range(5.0..60.0),
                a_prev: rng.random_range(-2.0..1.5),
                v_prev: rng.random_range(0.0..12.0),
            })
            .collect()
    }

    fn idm_data(n: usize, seed: u64) -> (Vec<CarFollowingState>, Vec<f64>) {
        let s = random_states(n, seed);
        let p = IdmParameters::default();
        let b = AccelerationBounds::default();
        let y = s.iter().map(|st| b.clamp(idm_accel(st, &p).unwrap())).collect();
        (s, y)
    }

    fn mse(m: &TrainedRegressor, s: &[CarFollowingState], y: &[f64]) -> f64 {
        s.iter().zip(y).map(|(st, t)| (m.predict_state(st) - t).powi(2)).sum::<f64>() / y.len() as f64
    }

    fn baseline(train: &[f64], y: &[f64]) -> f64 {
        let m = math::mean(train);
        y.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / y.len() as f64
    }

    fn small_rf() -> RfHyperparameters {
        RfHyperparameters {
            n_trees: 40,
            ..RfHyperparameters::default()
        }
    }

    fn quick_fnn() -> FnnHyperparameters {
        FnnHyperparameters {
            n_layers: 2,
            units_per_layer: 16,
            epochs: 3,
            ..FnnHyperparameters::default()
        }
    }

    #[test]
    fn constant_targets_give_constant_predictors() {
        let s = random_states(80, 1);
        let y = vec![0.37; 80];
        let probe = random_states(20, 2);
        let g = fit_gbt(&s, &y, &GbtHyperparameters::default(), 0).unwrap();
        let r = fit_rf(&s, &y, &small_rf(), 0).unwrap();
        for p in &probe {
            assert!((g.predict_state(p) - 0.37).abs() < 1e-9);
            assert!((r.predict_state(p) - 0.37).abs() < 1e-9);
        }
    }

    #[test]
    fn too_few_pairs_is_an_error() {
        let s = random_states(49, 1);
        let y = vec![0.0; 49];
        assert_eq!(
            fit_gbt(&s, &y, &GbtHyperparameters::default(), 0).unwrap_err(),
            LearnerError::Insufficient { needed: 50, got: 49 }
        );
        let s = random_states(99, 1);
        let y = vec![0.0; 99];
        assert!(matches!(
            fit_fnn(&s, &y, &FnnHyperparameters::default(), 0),
            Err(LearnerError::Insufficient { needed: 100, .. })
        ));
    }

    #[test]
    fn gbt_fits_step_function() {
        let s = random_states(300, 3);
        let y: Vec<f64> = s.iter().map(|st| if st.ds < 30.0 { -1.0 } else { 0.8 }).collect();
        let hp = GbtHyperparameters {
            n_rounds: 50,
            ..GbtHyperparameters::default()
        };
        let m = fit_gbt(&s, &y, &hp, 0).unwrap();
        assert!(m.summary.train_mse < 1e-3, "{}", m.summary.train_mse);
    }

    #[test]
    fn gbt_training_loss_never_increases() {
        let (s, y) = idm_data(400, 4);
        let m = fit_gbt(&s, &y, &GbtHyperparameters::default(), 0).unwrap();
        assert_eq!(m.summary.loss_curve.len(), 126);
        for w in m.summary.loss_curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn learners_beat_mean_baseline_on_idm() {
        let (s, y) = idm_data(2000, 5);
        let (vs, vy) = idm_data(500, 6);
        let base = baseline(&y, &vy);
        let g = fit_gbt(&s, &y, &GbtHyperparameters::default(), 0).unwrap();
        let r = fit_rf(&s, &y, &small_rf(), 0).unwrap();
        let f = fit_fnn(&s, &y, &FnnHyperparameters::default(), 0).unwrap();
        assert!(mse(&g, &vs, &vy) <= 0.5 * base);
        assert!(mse(&r, &vs, &vy) <= 0.5 * base);
        assert!(mse(&f, &vs, &vy) <= 0.5 * base);
    }

    #[test]
    fn gbt_in_sample_residual_is_recorded() {
        let (s, y) = idm_data(300, 7);
        let m = fit_gbt(&s, &y, &GbtHyperparameters::default(), 0).unwrap();
        for (st, t) in s.iter().zip(&y) {
            assert!((m.predict_state(st) - t).abs() <= m.summary.max_train_residual + 1e-12);
        }
    }

    #[test]
    fn rf_is_seed_deterministic() {
        let (s, y) = idm_data(200, 8);
        let a = fit_rf(&s, &y, &small_rf(), 42).unwrap();
        let b = fit_rf(&s, &y, &small_rf(), 42).unwrap();
        let c = fit_rf(&s, &y, &small_rf(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rf_feature_subsample_uses_rng() {
        let (s, y) = idm_data(200, 9);
        let hp = RfHyperparameters {
            feature_subsample: 0.5,
            n_trees: 5,
            ..RfHyperparameters::default()
        };
        let a = fit_rf(&s, &y, &hp, 1).unwrap();
        assert_eq!(a, fit_rf(&s, &y, &hp, 1).unwrap());
    }

    #[test]
    fn fnn_learns_linear_target() {
        let s = random_states(4000, 10);
        let y: Vec<f64> = s.iter().map(|st| 0.5 * st.dv).collect();
        // dropout noise alone keeps the default configuration near 1e-2 here
        let hp = FnnHyperparameters {
            dropout: 0.0,
            learning_rate: 1e-3,
            epochs: 60,
            ..FnnHyperparameters::default()
        };
        let m = fit_fnn(&s, &y, &hp, 0).unwrap();
        let t = random_states(500, 11);
        let ty: Vec<f64> = t.iter().map(|st| 0.5 * st.dv).collect();
        let e = mse(&m, &t, &ty);
        assert!(e < 1e-3, "test mse {e}");
    }

    #[test]
    fn fnn_zero_epochs_returns_initialisation() {
        let s = random_states(120, 12);
        let y: Vec<f64> = s.iter().map(|st| st.dv).collect();
        let hp = FnnHyperparameters {
            epochs: 0,
            ..FnnHyperparameters::default()
        };
        let m = fit_fnn(&s, &y, &hp, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::init(4, &[41, 41, 41, 41], &mut rng);
        let Fitted::Fnn(fitted) = &m.fitted else { panic!() };
        assert_eq!(fitted, &net);
        assert!(s.iter().all(|st| m.predict_state(st).is_finite()));
    }

    #[test]
    fn fnn_divergence_names_the_epoch() {
        let s = random_states(120, 13);
        let y: Vec<f64> = s.iter().map(|st| st.ds).collect();
        let hp = FnnHyperparameters {
            learning_rate: 1e300,
            dropout: 0.0,
            ..quick_fnn()
        };
        match fit_fnn(&s, &y, &hp, 0) {
            Err(LearnerError::Divergence { epoch, .. }) => assert!(epoch < hp.epochs),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..10 {
            let n_in = rng.random_range(1..=4);
            let hidden: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(2..=6)).collect();
            let mut net = Network::init(n_in, &hidden, &mut rng);
            // non-zero biases exercise every parameter
            let p: Vec<f64> = net.params().iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
            net.set_params(&p);
            let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..n_in).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let ys: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let err = gradient_check(&net, &xs, &ys, 1e-6);
            assert!(err < 1e-4, "relative gradient error {err}");
        }
    }

    #[test]
    fn fnn_is_seed_deterministic() {
        let s = random_states(150, 15);
        let y: Vec<f64> = s.iter().map(|st| 0.1 * st.dv - 0.01 * st.ds).collect();
        let a = fit_fnn(&s, &y, &quick_fnn(), 9).unwrap();
        assert_eq!(a, fit_fnn(&s, &y, &quick_fnn(), 9).unwrap());
    }

    #[test]
    fn trained_regressor_implements_model() {
        let (s, y) = idm_data(100, 16);
        let mut m = fit_gbt(&s, &y, &GbtHyperparameters::default(), 0).unwrap();
        assert_eq!(CarFollowingModel::name(&m), "gbt");
        assert!(m.predict(&s[0]).unwrap().is_finite());
        let bad = CarFollowingState { dv: f64::NAN, ..s[0] };
        assert!(m.predict(&bad).is_err());
    }

    proptest! {
        #[test]
        fn standardization_round_trips(col in proptest::collection::vec(-1e3f64..1e3, 2..50), probe in -1e3f64..1e3) {
            let s = Standardizer::fit(&[col]);
            let back = s.inverse(0, s.transform(0, probe));
            prop_assert!((back - probe).abs() <= 1e-12 * (1.0 + probe.abs()));
        }
    }
}
