use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::CalibrationError;
use crate::dataio::CarFollowingState;
use crate::models::{acc_accel, idm_accel, AccParameters, AccelerationBounds, IdmParameters, PhysicsKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    /// Mutation std as a fraction of each parameter's range.
    pub mutation_scale: f64,
    /// `(lo, hi)` per parameter, in the model's parameter order.
    pub parameter_bounds: Vec<(f64, f64)>,
    pub seed: u64,
    pub elitism: usize,
    /// Predictions are clamped to these bounds before scoring.
    pub accel_bounds: Option<AccelerationBounds>,
}

impl GaConfig {
    pub fn new(kind: PhysicsKind, seed: u64) -> Self {
        Self {
            population_size: 50,
            generations: 100,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            mutation_scale: 0.1,
            parameter_bounds: default_parameter_bounds(kind),
            seed,
            elitism: 2,
            accel_bounds: Some(AccelerationBounds::default()),
        }
    }

    pub fn validate(&self, n_params: usize) -> Result<(), CalibrationError> {
        let bad = |m: alloc::string::String| Err(CalibrationError::Config(m));
        if self.population_size < 4 {
            return bad(format!("population_size must be at least 4, got {}", self.population_size));
        }
        for (name, r) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} must lie in [0, 1], got {r}"));
            }
        }
        if !(self.mutation_scale >= 0.0) || !self.mutation_scale.is_finite() {
            return bad("mutation_scale must be finite and non-negative".into());
        }
        if self.elitism >= self.population_size {
            return bad("elitism must be smaller than the population".into());
        }
        if self.parameter_bounds.len() != n_params {
            return bad(format!(
                "expected {n_params} parameter bounds, got {}",
                self.parameter_bounds.len()
            ));
        }
        for (i, (lo, hi)) in self.parameter_bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("parameter {i}: bounds ({lo}, {hi}) need lo < hi"));
            }
        }
        if let Some(b) = self.accel_bounds {
            b.validate().map_err(|e| CalibrationError::Config(format!("{e}")))?;
        }
        Ok(())
    }
}

/// Search ranges that contain the default parameters with room on both sides.
pub fn default_parameter_bounds(kind: PhysicsKind) -> Vec<(f64, f64)> {
    match kind {
        // v0, T, s0, a, b, delta
        PhysicsKind::Idm => alloc::vec![(3.0, 30.0), (0.3, 4.0), (0.5, 6.0), (0.2, 4.0), (0.3, 5.0), (1.0, 8.0)],
        // k1, k2, t_hw, s0
        PhysicsKind::Acc => alloc::vec![(0.0, 1.5), (0.0, 1.5), (0.3, 4.0), (0.0, 8.0)],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaResult {
    pub kind: PhysicsKind,
    pub best: Vec<f64>,
    pub best_fitness: f64,
    /// Best-ever fitness after initialisation (index 0) and each generation.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Mean squared error of the model's (optionally clamped) predictions.
/// Invalid parameters or states score `+∞`.
pub fn physics_fitness(
    kind: PhysicsKind,
    params: &[f64],
    states: &[CarFollowingState],
    targets: &[f64],
    bounds: Option<AccelerationBounds>,
) -> f64 {
    let predict: &dyn Fn(&CarFollowingState) -> Option<f64> = match kind {
        PhysicsKind::Idm => match IdmParameters::from_slice(params) {
            Ok(p) => &move |s| idm_accel(s, &p).ok(),
            Err(_) => return f64::INFINITY,
        },
        PhysicsKind::Acc => match AccParameters::from_slice(params) {
            Ok(p) => &move |s| acc_accel(s, &p).ok(),
            Err(_) => return f64::INFINITY,
        },
    };
    let mut sse = 0.0;
    for (s, y) in states.iter().zip(targets) {
        let Some(mut a) = predict(s) else {
            return f64::INFINITY;
        };
        if let Some(b) = bounds {
            a = b.clamp(a);
        }
        sse += (a - y) * (a - y);
    }
    let mse = sse / targets.len() as f64;
    if mse.is_finite() {
        mse
    } else {
        f64::INFINITY
    }
}

pub fn calibrate_ga(
    kind: PhysicsKind,
    states: &[CarFollowingState],
    targets: &[f64],
    cfg: &GaConfig,
) -> Result<GaResult, CalibrationError> {
    let n_params = kind.parameter_names().len();
    cfg.validate(n_params)?;
    if states.is_empty() || states.len() != targets.len() {
        return Err(CalibrationError::Insufficient {
            needed: 1,
            got: states.len().min(targets.len()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fitness = |p: &[f64]| physics_fitness(kind, p, states, targets, cfg.accel_bounds);
    let mut evaluations = 0usize;

    let mut pop: Vec<Vec<f64>> = (0..cfg.population_size)
        .map(|_| cfg.parameter_bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect())
        .collect();
    if pop.iter().all(|p| *p == pop[0]) {
        return Err(CalibrationError::Config("initial population is degenerate".into()));
    }
    let mut fit: Vec<f64> = pop.iter().map(|p| fitness(p)).collect();
    evaluations += pop.len();

    let best_of = |fit: &[f64]| -> usize {
        (0..fit.len()).min_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b))).unwrap_or(0)
    };
    let b = best_of(&fit);
    let (mut best, mut best_fit) = (pop[b].clone(), fit[b]);
    let mut history = alloc::vec![best_fit];
    let sigmas: Vec<f64> = cfg.parameter_bounds.iter().map(|(lo, hi)| cfg.mutation_scale * (hi - lo)).collect();

    for _ in 0..cfg.generations {
        let mut ranked: Vec<usize> = (0..pop.len()).collect();
        ranked.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)));
        let mut next: Vec<Vec<f64>> = ranked[..cfg.elitism].iter().map(|&i| pop[i].clone()).collect();
        let mut next_fit: Vec<f64> = ranked[..cfg.elitism].iter().map(|&i| fit[i]).collect();
        let mut children = Vec::with_capacity(cfg.population_size - cfg.elitism);
        while next.len() + children.len() < cfg.population_size {
            let a = tournament(&fit, &mut rng);
            let b = tournament(&fit, &mut rng);
            let mut child = pop[a].clone();
            if rng.random::<f64>() < cfg.crossover_rate {
                for (g, other) in child.iter_mut().zip(&pop[b]) {
                    if rng.random::<bool>() {
                        *g = *other;
                    }
                }
            }
            for ((g, &(lo, hi)), &sd) in child.iter_mut().zip(&cfg.parameter_bounds).zip(&sigmas) {
                if rng.random::<f64>() < cfg.mutation_rate && sd > 0.0 {
                    let step = Normal::new(0.0, sd).expect("positive std").sample(&mut rng);
                    *g = (*g + step).clamp(lo, hi);
                }
            }
            children.push(child);
        }
        for c in children {
            next_fit.push(fitness(&c));
            next.push(c);
        }
        evaluations += cfg.population_size - cfg.elitism;
        pop = next;
        fit = next_fit;
        let b = best_of(&fit);
        if fit[b] < best_fit {
            best_fit = fit[b];
            best = pop[b].clone();
        }
        history.push(best_fit);
    }
    Ok(GaResult {
        kind,
        best,
        best_fitness: best_fit,
        history,
        evaluations,
    })
}

fn tournament(fit: &[f64], rng: &mut impl Rng) -> usize {
    let mut best = rng.random_range(0..fit.len());
    for _ in 1..3 {
        let c = rng.random_range(0..fit.len());
        if fit[c] < fit[best] || (fit[c] == fit[best] && c < best) {
            best = c;
        }
    }
    best
}
