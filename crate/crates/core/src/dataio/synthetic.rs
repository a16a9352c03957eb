//! Synthetic leader/follower trajectories with a known generating model.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::clean::forward_difference;
use super::{CarFollowingState, DataError, Sample, TrajectorySegment};
use crate::math;
use crate::models::{acc_accel, idm_accel, AccParameters, AccelerationBounds, IdmParameters};
use crate::simulation::{integrate, non_reversing};

/// Analytic leader speed profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeaderProfile {
    Constant { speed: f64 },
    /// `base + amplitude·sin(2πt/period)`.
    Sinusoidal { base_speed: f64, amplitude: f64, period: f64 },
    /// Triangle wave between `base ± amplitude`, starting at the top:
    /// steady deceleration for half a period, then steady acceleration.
    StopAndGo { base_speed: f64, amplitude: f64, period: f64 },
}

impl LeaderProfile {
    /// `(x, v, a)` at time `t`, with `x(0) = 0`.
    pub fn state(&self, t: f64) -> (f64, f64, f64) {
        match *self {
            LeaderProfile::Constant { speed } => (speed * t, speed, 0.0),
            LeaderProfile::Sinusoidal {
                base_speed,
                amplitude,
                period,
            } => {
                let w = 2.0 * PI / period;
                (
                    base_speed * t + amplitude / w * (1.0 - math::cos(w * t)),
                    base_speed + amplitude * math::sin(w * t),
                    amplitude * w * math::cos(w * t),
                )
            }
            LeaderProfile::StopAndGo {
                base_speed,
                amplitude,
                period,
            } => {
                let phase = t / period - math::floor(t / period);
                let slope = 4.0 * amplitude / period;
                // integral of the unit triangle wave over the current period
                let (tri, integral, a) = if phase < 0.5 {
                    (1.0 - 4.0 * phase, phase - 2.0 * phase * phase, -slope)
                } else {
                    (-3.0 + 4.0 * phase, 2.0 * phase * phase - 3.0 * phase + 1.0, slope)
                };
                (
                    base_speed * t + amplitude * period * integral,
                    base_speed + amplitude * tri,
                    a,
                )
            }
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        let ok = match *self {
            LeaderProfile::Constant { speed } => speed >= 0.0,
            LeaderProfile::Sinusoidal {
                base_speed,
                amplitude,
                period,
            }
            | LeaderProfile::StopAndGo {
                base_speed,
                amplitude,
                period,
            } => period > 0.0 && amplitude >= 0.0 && base_speed >= amplitude,
        };
        if ok {
            Ok(())
        } else {
            Err(DataError::Config(alloc::format!(
                "leader profile must keep speed non-negative: {self:?}"
            )))
        }
    }
}

/// Physics model driving the synthetic follower.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum SyntheticFollower {
    Idm(IdmParameters),
    Acc(AccParameters),
}

impl SyntheticFollower {
    fn accel(&self, state: &CarFollowingState) -> Result<f64, DataError> {
        match self {
            SyntheticFollower::Idm(p) => idm_accel(state, p),
            SyntheticFollower::Acc(p) => acc_accel(state, p),
        }
        .map_err(|e| DataError::Model(e.to_string()))
    }

    pub fn equilibrium_spacing(&self, v: f64) -> f64 {
        match self {
            SyntheticFollower::Idm(p) => p.equilibrium_spacing(v),
            SyntheticFollower::Acc(p) => p.equilibrium_spacing(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub id: String,
    pub profile: LeaderProfile,
    pub follower: SyntheticFollower,
    /// Standard deviation of Gaussian position noise, m.
    pub noise_sigma: f64,
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    /// Initial spacing; the follower's equilibrium spacing when `None`.
    pub initial_gap: Option<f64>,
    pub bounds: AccelerationBounds,
    /// Added to every timestamp (for stitching several segments together).
    pub t_offset: f64,
    /// Added to every position.
    pub x_offset: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            id: String::from("synthetic"),
            profile: LeaderProfile::StopAndGo {
                base_speed: 5.0,
                amplitude: 3.0,
                period: 60.0,
            },
            follower: SyntheticFollower::Idm(IdmParameters::default()),
            noise_sigma: 0.0,
            duration: 300.0,
            dt: 1.0,
            seed: 0,
            initial_gap: None,
            bounds: AccelerationBounds::default(),
            t_offset: 0.0,
            x_offset: 0.0,
        }
    }
}

/// Clean trajectory and the one returned to callers (noisy when requested).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrajectory {
    pub clean: TrajectorySegment,
    pub observed: TrajectorySegment,
}

/// Generates a leader/follower segment; see [`generate_synthetic_with_truth`].
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<TrajectorySegment, DataError> {
    generate_synthetic_with_truth(cfg).map(|s| s.observed)
}

/// The leader follows `cfg.profile` exactly; the follower is rolled out in
/// closed loop with the same step rule as [`crate::simulation::rollout`],
/// starting at the leader's speed with zero acceleration.
///
/// With `noise_sigma > 0` the observed segment carries Gaussian noise on both
/// positions, and its speeds and accelerations are re-derived by forward
/// differences the way raw position-only data would be.
pub fn generate_synthetic_with_truth(cfg: &SyntheticConfig) -> Result<SyntheticTrajectory, DataError> {
    if !(cfg.dt > 0.0 && cfg.duration > 0.0) {
        return Err(DataError::Config(alloc::format!(
            "dt and duration must be positive (dt = {}, duration = {})",
            cfg.dt,
            cfg.duration
        )));
    }
    if !(cfg.noise_sigma >= 0.0) {
        return Err(DataError::Config(alloc::format!("noise_sigma = {}", cfg.noise_sigma)));
    }
    cfg.profile.validate()?;
    cfg.bounds.validate().map_err(|e| DataError::Config(e.to_string()))?;

    let n = math::floor(cfg.duration / cfg.dt + 1e-9) as usize + 1;
    let leader: Vec<(f64, f64, f64)> = (0..n).map(|k| cfg.profile.state(k as f64 * cfg.dt)).collect();
    let v_start = leader[0].1;
    let gap = cfg.initial_gap.unwrap_or_else(|| cfg.follower.equilibrium_spacing(v_start));
    if !(gap.is_finite() && gap > 0.0) {
        return Err(DataError::Config(alloc::format!(
            "initial gap {gap} is not a positive spacing"
        )));
    }

    let mut xf = alloc::vec![0.0; n];
    let mut vf = alloc::vec![0.0; n];
    let mut af = alloc::vec![0.0; n];
    xf[0] = leader[0].0 - gap;
    vf[0] = v_start;
    for k in 0..n {
        let spacing = leader[k].0 - xf[k];
        if spacing <= 0.0 {
            return Err(DataError::Collision {
                t: k as f64 * cfg.dt + cfg.t_offset,
                spacing,
            });
        }
        if k > 0 {
            let state = CarFollowingState {
                dv: leader[k].1 - vf[k],
                ds: spacing,
                a_prev: af[k - 1],
                v_prev: vf[k - 1],
            };
            let a = cfg.bounds.clamp(cfg.follower.accel(&state)?);
            af[k] = non_reversing(vf[k], a, cfg.dt);
        }
        if k + 1 < n {
            let next = integrate(xf[k], vf[k], af[k], cfg.dt);
            xf[k + 1] = next.x;
            vf[k + 1] = next.v;
        }
    }

    let clean_samples: Vec<Sample> = (0..n)
        .map(|k| Sample {
            t: k as f64 * cfg.dt + cfg.t_offset,
            x_l: leader[k].0 + cfg.x_offset,
            v_l: leader[k].1,
            a_l: leader[k].2,
            x_f: xf[k] + cfg.x_offset,
            v_f: vf[k],
            a_f: af[k],
        })
        .collect();
    let clean = TrajectorySegment::new(cfg.id.clone(), clean_samples);

    if cfg.noise_sigma == 0.0 {
        return Ok(SyntheticTrajectory {
            observed: clean.clone(),
            clean,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.noise_sigma).map_err(|e| DataError::Config(alloc::format!("{e}")))?;
    let t: Vec<f64> = clean.samples.iter().map(|s| s.t).collect();
    let mut xl_noisy = Vec::with_capacity(n);
    let mut xf_noisy = Vec::with_capacity(n);
    for s in &clean.samples {
        xl_noisy.push(s.x_l + normal.sample(&mut rng));
        xf_noisy.push(s.x_f + normal.sample(&mut rng));
    }
    let vl = forward_difference(&t, &xl_noisy);
    let vf_n = forward_difference(&t, &xf_noisy);
    let al = forward_difference(&t, &vl);
    let af_n = forward_difference(&t, &vf_n);
    let samples = (0..n)
        .map(|k| Sample {
            t: t[k],
            x_l: xl_noisy[k],
            v_l: vl[k],
            a_l: al[k],
            x_f: xf_noisy[k],
            v_f: vf_n[k],
            a_f: af_n[k],
        })
        .collect();
    Ok(SyntheticTrajectory {
        clean,
        observed: TrajectorySegment::new(cfg.id.clone(), samples),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::derive_features;

    #[test]
    fn constant_leader_converges_to_idm_equilibrium() {
        let p = IdmParameters::default();
        let cfg = SyntheticConfig {
            profile: LeaderProfile::Constant { speed: 8.0 },
            follower: SyntheticFollower::Idm(p),
            initial_gap: Some(40.0),
            duration: 600.0,
            ..Default::default()
        };
        let seg = generate_synthetic(&cfg).unwrap();
        let last = seg.samples.last().unwrap();
        let s_eq = p.equilibrium_spacing(8.0);
        assert!((last.spacing() - s_eq).abs() < 1e-3, "{} vs {}", last.spacing(), s_eq);
        assert!((last.v_f - 8.0).abs() < 1e-3);
    }

    #[test]
    fn stop_and_go_profile_is_consistent() {
        let prof = LeaderProfile::StopAndGo {
            base_speed: 5.0,
            amplitude: 3.0,
            period: 40.0,
        };
        // position is the integral of speed: check by trapezoid on a fine grid
        let h = 1e-3;
        let mut x = 0.0;
        let mut t = 0.0;
        while t < 100.0 - 1e-12 {
            x += 0.5 * h * (prof.state(t).1 + prof.state(t + h).1);
            t += h;
        }
        assert!((x - prof.state(100.0).0).abs() < 1e-4);
        assert_eq!(prof.state(0.0).1, 8.0);
        assert_eq!(prof.state(20.0).1, 2.0);
    }

    #[test]
    fn targets_match_closed_form_idm() {
        let p = IdmParameters::default();
        let cfg = SyntheticConfig {
            follower: SyntheticFollower::Idm(p),
            ..Default::default()
        };
        let seg = generate_synthetic(&cfg).unwrap();
        let bounds = AccelerationBounds::default();
        for (state, target) in derive_features(&seg).unwrap() {
            let expected = bounds.clamp(idm_accel(&state, &p).unwrap());
            assert!((target - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_has_requested_std() {
        let cfg = SyntheticConfig {
            noise_sigma: 0.5,
            duration: 1200.0,
            seed: 3,
            ..Default::default()
        };
        let s = generate_synthetic_with_truth(&cfg).unwrap();
        let diffs: Vec<f64> = s
            .observed
            .samples
            .iter()
            .zip(&s.clean.samples)
            .flat_map(|(o, c)| [o.x_f - c.x_f, o.x_l - c.x_l])
            .collect();
        assert!(diffs.len() >= 1000);
        let sd = math::std_pop(&diffs);
        assert!((sd - 0.5).abs() < 0.05, "{sd}");
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = SyntheticConfig {
            noise_sigma: 0.3,
            seed: 11,
            ..Default::default()
        };
        assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
    }

    #[test]
    fn colliding_parameters_are_rejected() {
        let cfg = SyntheticConfig {
            profile: LeaderProfile::Constant { speed: 2.0 },
            follower: SyntheticFollower::Acc(AccParameters {
                k1: 0.5,
                k2: 0.1,
                t_hw: 0.1,
                s0: -20.0,
            }),
            initial_gap: Some(5.0),
            ..Default::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(DataError::Collision { .. })));
    }
}
