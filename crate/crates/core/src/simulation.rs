//! Closed-loop rollout: the leader is replayed from data while the follower is
//! driven by a model's bounded acceleration through kinematic integration.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataio::{CarFollowingState, TrajectorySegment};
use crate::math;
use crate::models::{AccelerationBounds, CarFollowingModel, ModelError};

#[derive(Debug, thiserror::Error)]
pub enum RolloutError {
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("segment {0} has no samples")]
    EmptySegment(String),
    #[error("non-finite prediction {value} at step {step} for state {state:?}")]
    NonFinite {
        step: usize,
        value: f64,
        state: CarFollowingState,
    },
    #[error("model failed at step {step} for state {state:?}: {source}")]
    Model {
        step: usize,
        state: CarFollowingState,
        source: ModelError,
    },
    #[error("nothing to simulate: {0}")]
    Empty(&'static str),
}

/// Observed leader and follower on the simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedGrid {
    pub segment_id: String,
    pub dt: f64,
    pub t: Vec<f64>,
    pub x_l: Vec<f64>,
    pub v_l: Vec<f64>,
    pub x_f: Vec<f64>,
    pub v_f: Vec<f64>,
    pub a_f: Vec<f64>,
}

impl ObservedGrid {
    /// Resamples `seg` onto `t0, t0 + dt, …` up to the last sample.
    ///
    /// Positions, speeds and accelerations are linearly interpolated; grid
    /// points that coincide with a recorded timestamp take that sample as is.
    pub fn from_segment(seg: &TrajectorySegment, dt: f64) -> Result<Self, RolloutError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(RolloutError::InvalidStep(dt));
        }
        let first = seg
            .samples
            .first()
            .ok_or_else(|| RolloutError::EmptySegment(seg.id.clone()))?;
        let t_end = seg.samples[seg.samples.len() - 1].t;
        let n = math::floor((t_end - first.t) / dt + 1e-9) as usize + 1;
        let ts = seg.times();
        let col = |f: fn(&crate::dataio::Sample) -> f64| seg.samples.iter().map(f).collect::<Vec<f64>>();
        let (xl, vl, xf, vf, af) = (
            col(|s| s.x_l),
            col(|s| s.v_l),
            col(|s| s.x_f),
            col(|s| s.v_f),
            col(|s| s.a_f),
        );
        let grid: Vec<f64> = (0..n).map(|k| first.t + k as f64 * dt).collect();
        let at = |ys: &[f64]| grid.iter().map(|&t| math::interp(&ts, ys, t)).collect::<Vec<f64>>();
        Ok(Self {
            segment_id: seg.id.clone(),
            dt,
            x_l: at(&xl),
            v_l: at(&vl),
            x_f: at(&xf),
            v_f: at(&vf),
            a_f: at(&af),
            t: grid,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.t.first(), self.t.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

/// One simulation step: leader input, observed follower, simulated follower.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimStep {
    pub t: f64,
    pub x_l: f64,
    pub v_l: f64,
    pub x_obs: f64,
    pub v_obs: f64,
    pub a_obs: f64,
    pub x: f64,
    pub v: f64,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedTrajectory {
    pub segment_id: String,
    pub model: String,
    pub bounds: AccelerationBounds,
    pub dt: f64,
    /// Simulated spacing reached zero or below at some step.
    pub collision: bool,
    pub steps: Vec<SimStep>,
}

impl SimulatedTrajectory {
    pub fn duration(&self) -> f64 {
        match (self.steps.first(), self.steps.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn column(&self, f: impl Fn(&SimStep) -> f64) -> Vec<f64> {
        self.steps.iter().map(f).collect()
    }
}

/// Result of one kinematic step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub x: f64,
    pub v: f64,
    /// Acceleration actually applied over the step.
    pub a: f64,
}

/// Acceleration adjusted so the speed never drops below zero over `dt`.
#[inline]
pub fn non_reversing(v: f64, a: f64, dt: f64) -> f64 {
    if v + a * dt < 0.0 {
        -v / dt
    } else {
        a
    }
}

/// `v' = max(0, v + a·dt)`, `x' = x + v·dt + ½·a·dt²` with `a` already
/// passed through [`non_reversing`].
#[inline]
pub fn integrate(x: f64, v: f64, a: f64, dt: f64) -> Kinematics {
    Kinematics {
        x: x + v * dt + 0.5 * a * dt * dt,
        v: (v + a * dt).max(0.0),
        a,
    }
}

/// Simulates the follower of `seg` under `model`.
///
/// The follower starts from the first observed `(x, v, a)`. At every later
/// grid step the state is built from the observed leader and the simulated
/// follower, the prediction is clamped to `bounds` and then limited so the
/// follower never reverses. While the simulated spacing is non-positive the
/// collision flag is set and the follower brakes at `bounds.a_min` without
/// consulting the model.
pub fn rollout<M: CarFollowingModel + ?Sized>(
    seg: &TrajectorySegment,
    model: &mut M,
    bounds: AccelerationBounds,
    dt: f64,
) -> Result<SimulatedTrajectory, RolloutError> {
    let grid = ObservedGrid::from_segment(seg, dt)?;
    rollout_on_grid(&grid, model, bounds)
}

pub fn rollout_on_grid<M: CarFollowingModel + ?Sized>(
    grid: &ObservedGrid,
    model: &mut M,
    bounds: AccelerationBounds,
) -> Result<SimulatedTrajectory, RolloutError> {
    let dt = grid.dt;
    let n = grid.len();
    if n == 0 {
        return Err(RolloutError::EmptySegment(grid.segment_id.clone()));
    }
    model.begin_segment(grid);

    let mut x = alloc::vec![0.0; n];
    let mut v = alloc::vec![0.0; n];
    let mut a = alloc::vec![0.0; n];
    x[0] = grid.x_f[0];
    v[0] = grid.v_f[0];
    a[0] = grid.a_f[0];
    let mut collision = false;

    for k in 0..n {
        if k > 0 {
            let spacing = grid.x_l[k] - x[k];
            let commanded = if spacing <= 0.0 {
                collision = true;
                bounds.a_min
            } else {
                let state = CarFollowingState {
                    dv: grid.v_l[k] - v[k],
                    ds: spacing,
                    a_prev: a[k - 1],
                    v_prev: v[k - 1],
                };
                let raw = model
                    .predict(&state)
                    .map_err(|source| RolloutError::Model { step: k, state, source })?;
                if !raw.is_finite() {
                    return Err(RolloutError::NonFinite {
                        step: k,
                        value: raw,
                        state,
                    });
                }
                bounds.clamp(raw)
            };
            a[k] = non_reversing(v[k], commanded, dt);
        } else {
            a[0] = non_reversing(v[0], a[0], dt);
        }
        if k + 1 < n {
            let next = integrate(x[k], v[k], a[k], dt);
            x[k + 1] = next.x;
            v[k + 1] = next.v;
        }
    }

    let steps = (0..n)
        .map(|k| SimStep {
            t: grid.t[k],
            x_l: grid.x_l[k],
            v_l: grid.v_l[k],
            x_obs: grid.x_f[k],
            v_obs: grid.v_f[k],
            a_obs: grid.a_f[k],
            x: x[k],
            v: v[k],
            a: a[k],
        })
        .collect();
    Ok(SimulatedTrajectory {
        segment_id: grid.segment_id.clone(),
        model: model.name().to_string(),
        bounds,
        dt,
        collision,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutFailure {
    pub model: String,
    pub segment_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    /// `(model name, trajectories in segment order)` in roster order.
    pub results: Vec<(String, Vec<SimulatedTrajectory>)>,
    pub failures: Vec<RolloutFailure>,
}

/// Simulates every `(model, segment)` pair; failures are recorded and do not
/// stop the remaining pairs.
pub fn rollout_all<M: CarFollowingModel>(
    test: &[TrajectorySegment],
    models: &mut [M],
    bounds: AccelerationBounds,
    dt: f64,
) -> Result<RolloutBatch, RolloutError> {
    if test.is_empty() {
        return Err(RolloutError::Empty("test set"));
    }
    if models.is_empty() {
        return Err(RolloutError::Empty("model roster"));
    }
    let grids = test
        .iter()
        .map(|s| ObservedGrid::from_segment(s, dt))
        .collect::<Result<Vec<_>, _>>()?;
    let mut batch = RolloutBatch::default();
    for model in models.iter_mut() {
        let name = model.name().to_string();
        let mut trajs = Vec::with_capacity(grids.len());
        for grid in &grids {
            match rollout_on_grid(grid, model, bounds) {
                Ok(t) => trajs.push(t),
                Err(e) => batch.failures.push(RolloutFailure {
                    model: name.clone(),
                    segment_id: grid.segment_id.clone(),
                    message: e.to_string(),
                }),
            }
        }
        batch.results.push((name, trajs));
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Sample;
    use crate::models::oracle::{OracleKind, OracleModel};
    use crate::models::{ConstantModel, StateError};

    fn segment_from_accels(accels: &[f64], v0: f64, gap: f64) -> TrajectorySegment {
        let mut samples = Vec::new();
        let (mut xf, mut vf) = (0.0, v0);
        for (k, &af) in accels.iter().enumerate() {
            let t = k as f64;
            samples.push(Sample {
                t,
                x_l: gap + v0 * t,
                v_l: v0,
                a_l: 0.0,
                x_f: xf,
                v_f: vf,
                a_f: af,
            });
            let a = non_reversing(vf, af, 1.0);
            let next = integrate(xf, vf, a, 1.0);
            xf = next.x;
            vf = next.v;
        }
        TrajectorySegment::new("s", samples)
    }

    #[test]
    fn replaying_recorded_accelerations_is_exact() {
        let accels: Vec<f64> = (0..80).map(|k| 0.4 * crate::math::cos(k as f64 / 7.0)).collect();
        let seg = segment_from_accels(&accels, 5.0, 200.0);
        let mut oracle = OracleModel::new("oracle", OracleKind::Perfect);
        let sim = rollout(&seg, &mut oracle, AccelerationBounds::default(), 1.0).unwrap();
        for (step, s) in sim.steps.iter().zip(&seg.samples) {
            assert!((step.x - s.x_f).abs() < 1e-6, "{} {} {}", step.t, step.x, s.x_f);
        }
        assert!(!sim.collision);
    }

    #[test]
    fn zero_acceleration_from_rest_stays_put() {
        let seg = segment_from_accels(&[0.0; 30], 0.0, 10.0);
        let mut m = ConstantModel {
            name: "zero".into(),
            value: 0.0,
        };
        let sim = rollout(&seg, &mut m, AccelerationBounds::default(), 1.0).unwrap();
        assert!(sim.steps.iter().all(|s| s.x == 0.0 && s.v == 0.0));
    }

    #[test]
    fn initial_state_is_copied_bit_exactly() {
        let seg = segment_from_accels(&[0.3; 10], 3.3, 12.0);
        let mut m = ConstantModel {
            name: "c".into(),
            value: -1.0,
        };
        let sim = rollout(&seg, &mut m, AccelerationBounds::default(), 1.0).unwrap();
        let s0 = &seg.samples[0];
        assert_eq!((sim.steps[0].x, sim.steps[0].v, sim.steps[0].a), (s0.x_f, s0.v_f, s0.a_f));
    }

    #[test]
    fn hard_braking_floors_speed_at_zero() {
        let seg = segment_from_accels(&[0.0; 20], 2.5, 100.0);
        let mut m = ConstantModel {
            name: "brake".into(),
            value: -3.0,
        };
        let sim = rollout(&seg, &mut m, AccelerationBounds::default(), 1.0).unwrap();
        for w in sim.steps.windows(2) {
            assert!(w[1].v >= 0.0);
            assert!(w[0].a >= -3.0 && w[0].a <= 2.0);
            assert_eq!(w[1].x, w[0].x + w[0].v + 0.5 * w[0].a);
        }
        assert_eq!(sim.steps[1].a, -2.5);
        assert_eq!(sim.steps.last().unwrap().v, 0.0);
    }

    #[test]
    fn collision_is_flagged_not_fatal() {
        let seg = segment_from_accels(&[0.0; 20], 1.0, 3.0);
        let mut m = ConstantModel {
            name: "rush".into(),
            value: 2.0,
        };
        let sim = rollout(&seg, &mut m, AccelerationBounds::default(), 1.0).unwrap();
        assert!(sim.collision);
        assert_eq!(sim.steps.len(), 20);
    }

    struct Nan;
    impl CarFollowingModel for Nan {
        fn name(&self) -> &str {
            "nan"
        }
        fn predict(&mut self, _: &CarFollowingState) -> Result<f64, ModelError> {
            Ok(f64::NAN)
        }
    }

    struct Failing;
    impl CarFollowingModel for Failing {
        fn name(&self) -> &str {
            "failing"
        }
        fn predict(&mut self, _: &CarFollowingState) -> Result<f64, ModelError> {
            Err(ModelError::InvalidState(StateError::NonFinite))
        }
    }

    #[test]
    fn non_finite_prediction_names_the_step() {
        let seg = segment_from_accels(&[0.0; 5], 1.0, 10.0);
        match rollout(&seg, &mut Nan, AccelerationBounds::default(), 1.0) {
            Err(RolloutError::NonFinite { step, .. }) => assert_eq!(step, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn irregular_grid_interpolates_leader() {
        let mut seg = segment_from_accels(&[0.0; 11], 2.0, 10.0);
        // stretch timestamps by 2: samples every 2 s, grid every 1 s
        for s in &mut seg.samples {
            s.t *= 2.0;
            s.x_l = 10.0 + 2.0 * s.t;
            s.x_f = 2.0 * s.t;
        }
        let grid = ObservedGrid::from_segment(&seg, 1.0).unwrap();
        assert_eq!(grid.len(), 21);
        assert_eq!(grid.x_l[3], 16.0);
    }

    #[test]
    fn rollout_all_isolates_failures() {
        let segs: Vec<_> = (0..3).map(|_| segment_from_accels(&[0.0; 10], 1.0, 10.0)).collect();
        let mut models: Vec<alloc::boxed::Box<dyn CarFollowingModel>> = alloc::vec![
            alloc::boxed::Box::new(ConstantModel {
                name: "zero".into(),
                value: 0.0
            }),
            alloc::boxed::Box::new(Failing),
        ];
        let batch = rollout_all(&segs, &mut models, AccelerationBounds::default(), 1.0).unwrap();
        assert_eq!(batch.results[0].1.len(), 3);
        assert_eq!(batch.results[1].1.len(), 0);
        assert_eq!(batch.failures.len(), 3);
        let again = rollout_all(&segs, &mut models, AccelerationBounds::default(), 1.0).unwrap();
        assert_eq!(batch, again);
    }

    #[test]
    fn two_models_three_segments() {
        let segs: Vec<_> = (0..3).map(|_| segment_from_accels(&[0.1; 10], 1.0, 10.0)).collect();
        let mut models = alloc::vec![
            ConstantModel {
                name: "a".into(),
                value: 0.0
            },
            ConstantModel {
                name: "b".into(),
                value: 0.5
            },
        ];
        let batch = rollout_all(&segs, &mut models, AccelerationBounds::default(), 1.0).unwrap();
        let total: usize = batch.results.iter().map(|(_, t)| t.len()).sum();
        assert_eq!(total, 6);
        assert!(batch.failures.is_empty());
    }
}
