//! Constant-acceleration Kalman filter over position-only measurements.
//!
//! The transition matrix is rebuilt at every step from the actual sample
//! spacing, so irregular timestamps are handled without resampling.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataio::{Sample, TrajectorySegment};

type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("timestamps must be strictly increasing (index {index}: {prev} then {next})")]
    Ordering { index: usize, prev: f64, next: f64 },
    #[error("non-finite state or covariance at step {0}")]
    Numerical(usize),
    #[error("invalid configuration: {0}")]
    Config(&'static str),
}

/// Process and measurement noise, plus the initial covariance.
///
/// The initial state is taken from the data: position from the first
/// measurement, speed from the first finite difference, zero acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanConfig {
    /// Process noise covariance over (position, velocity, acceleration).
    pub q: Mat3,
    /// Position measurement variance, m².
    pub r: f64,
    pub initial_covariance: Mat3,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            q: diag([0.1, 0.01, 0.001]),
            r: 0.5,
            initial_covariance: diag([1.0, 1.0, 1.0]),
        }
    }
}

impl KalmanConfig {
    pub fn from_diagonals(q: [f64; 3], r: f64, p0: [f64; 3]) -> Result<Self, FilterError> {
        let cfg = Self {
            q: diag(q),
            r,
            initial_covariance: diag(p0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(FilterError::Config("measurement variance must be positive"));
        }
        for m in [&self.q, &self.initial_covariance] {
            for i in 0..3 {
                if !(m[i][i] >= 0.0) {
                    return Err(FilterError::Config("covariance diagonal must be non-negative"));
                }
                for j in 0..3 {
                    if m[i][j] != m[j][i] || !m[i][j].is_finite() {
                        return Err(FilterError::Config("covariance must be finite and symmetric"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One filtered estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilteredPoint {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub a: f64,
    /// Trace of the posterior covariance.
    pub trace: f64,
    /// Position variance before and after the measurement update.
    pub prior_var: f64,
    pub posterior_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredTrack {
    pub points: Vec<FilteredPoint>,
}

fn diag(d: [f64; 3]) -> Mat3 {
    [[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]]
}

fn transition(dt: f64) -> Mat3 {
    [[1.0, dt, 0.5 * dt * dt], [0.0, 1.0, dt], [0.0, 0.0, 1.0]]
}

fn mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn transpose(a: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

fn add(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = *a;
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] += b[i][j];
        }
    }
    c
}

/// Filters `(t, x)` measurements.
pub fn kalman_filter(positions: &[(f64, f64)], config: &KalmanConfig) -> Result<FilteredTrack, FilterError> {
    config.validate()?;
    if positions.len() < 2 {
        return Err(FilterError::TooFewSamples(positions.len()));
    }
    for (i, w) in positions.windows(2).enumerate() {
        if !(w[1].0 > w[0].0) {
            return Err(FilterError::Ordering {
                index: i + 1,
                prev: w[0].0,
                next: w[1].0,
            });
        }
    }

    let (t0, x0) = positions[0];
    let (t1, x1) = positions[1];
    let mut state = [x0, (x1 - x0) / (t1 - t0), 0.0];
    let mut p = config.initial_covariance;
    let mut out = Vec::with_capacity(positions.len());

    for (k, &(t, z)) in positions.iter().enumerate() {
        if k > 0 {
            let f = transition(t - positions[k - 1].0);
            state = [
                f[0][0] * state[0] + f[0][1] * state[1] + f[0][2] * state[2],
                state[1] + f[1][2] * state[2],
                state[2],
            ];
            p = add(&mul(&mul(&f, &p), &transpose(&f)), &config.q);
        }
        let prior_var = p[0][0];

        // update with H = [1, 0, 0]
        let s = p[0][0] + config.r;
        let gain = [p[0][0] / s, p[1][0] / s, p[2][0] / s];
        let innovation = z - state[0];
        for i in 0..3 {
            state[i] += gain[i] * innovation;
        }
        // Joseph form: (I − KH) P (I − KH)ᵀ + K r Kᵀ
        let mut ikh = diag([1.0, 1.0, 1.0]);
        for i in 0..3 {
            ikh[i][0] -= gain[i];
        }
        let mut krk = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                krk[i][j] = gain[i] * config.r * gain[j];
            }
        }
        p = add(&mul(&mul(&ikh, &p), &transpose(&ikh)), &krk);

        let trace = p[0][0] + p[1][1] + p[2][2];
        if !(state.iter().all(|x| x.is_finite()) && trace.is_finite() && trace > 0.0) {
            return Err(FilterError::Numerical(k));
        }
        out.push(FilteredPoint {
            t,
            x: state[0],
            v: state[1],
            a: state[2],
            trace,
            prior_var,
            posterior_var: p[0][0],
        });
    }
    Ok(FilteredTrack { points: out })
}

/// Filters leader and follower positions independently and replaces every
/// speed and acceleration with the filter's estimate.
pub fn smooth_segment(seg: &TrajectorySegment, config: &KalmanConfig) -> Result<TrajectorySegment, FilterError> {
    let leader: Vec<(f64, f64)> = seg.samples.iter().map(|s| (s.t, s.x_l)).collect();
    let follower: Vec<(f64, f64)> = seg.samples.iter().map(|s| (s.t, s.x_f)).collect();
    let fl = kalman_filter(&leader, config)?;
    let ff = kalman_filter(&follower, config)?;
    let samples = fl
        .points
        .iter()
        .zip(&ff.points)
        .map(|(l, f)| Sample {
            t: l.t,
            x_l: l.x,
            v_l: l.v,
            a_l: l.a,
            x_f: f.x,
            v_f: f.v,
            a_f: f.a,
        })
        .collect();
    Ok(TrajectorySegment {
        id: seg.id.clone(),
        samples,
        dt: seg.dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{LeaderProfile, SyntheticConfig};
    use crate::math;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn defaults_are_exact() {
        let c = KalmanConfig::default();
        assert_eq!(c.q, [[0.1, 0.0, 0.0], [0.0, 0.01, 0.0], [0.0, 0.0, 0.001]]);
        assert_eq!(c.r, 0.5);
    }

    #[test]
    fn constant_velocity_converges() {
        let xs: Vec<(f64, f64)> = (0..40).map(|k| (k as f64, 2.0 * k as f64)).collect();
        let track = kalman_filter(&xs, &KalmanConfig::default()).unwrap();
        for p in &track.points[20..] {
            assert!((p.v - 2.0).abs() <= 0.05);
        }
    }

    #[test]
    fn static_input_settles_to_zero_motion() {
        // start away from rest so convergence is actually exercised
        let mut xs: Vec<(f64, f64)> = (0..200).map(|k| (k as f64, 5.0)).collect();
        xs[0].1 = 4.0;
        let track = kalman_filter(&xs, &KalmanConfig::default()).unwrap();
        let last = track.points.last().unwrap();
        assert!(last.v.abs() < 1e-3 && last.a.abs() < 1e-3, "{last:?}");
    }

    #[test]
    fn update_never_increases_position_variance() {
        let xs: Vec<(f64, f64)> = (0..60)
            .map(|k| {
                let t = k as f64 * 0.7 + if k % 5 == 0 { 0.4 } else { 0.0 };
                (t, math::sin(t))
            })
            .collect();
        let track = kalman_filter(&xs, &KalmanConfig::default()).unwrap();
        for p in &track.points {
            assert!(p.posterior_var <= p.prior_var);
            assert!(p.trace > 0.0 && p.trace.is_finite());
        }
    }

    #[test]
    fn rejects_non_increasing_time() {
        let xs = [(0.0, 0.0), (1.0, 1.0), (1.0, 2.0)];
        assert!(matches!(
            kalman_filter(&xs, &KalmanConfig::default()),
            Err(FilterError::Ordering { index: 2, .. })
        ));
        assert!(matches!(
            kalman_filter(&xs[..1], &KalmanConfig::default()),
            Err(FilterError::TooFewSamples(1))
        ));
    }

    #[test]
    fn white_noise_floor_matches_steady_state_analysis() {
        // Steady-state gain of the default Q/R with H = [1, 0, 0] and
        // measurement noise of std 0.5 m gives an error-covariance fixed point
        // (Lyapunov equation solved offline) of 0.3534 m, a ratio of 0.7068.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let n = 20_000;
        let truth: Vec<f64> = (0..n).map(|k| 3.0 * k as f64).collect();
        let meas: Vec<(f64, f64)> = truth
            .iter()
            .enumerate()
            .map(|(k, x)| (k as f64, x + noise.sample(&mut rng)))
            .collect();
        let track = kalman_filter(&meas, &KalmanConfig::default()).unwrap();
        let rms = |e: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = e.map(|d| d * d).collect();
            math::sqrt(math::mean(&v))
        };
        let raw = rms(&mut meas[100..].iter().zip(&truth[100..]).map(|(m, x)| m.1 - x));
        let filt = rms(&mut track.points[100..].iter().zip(&truth[100..]).map(|(p, x)| p.x - x));
        assert!((filt / raw - 0.7068).abs() < 0.02, "ratio {}", filt / raw);
    }

    #[test]
    fn smoothing_preserves_timestamps() {
        let cfg = SyntheticConfig {
            duration: 90.0,
            ..Default::default()
        };
        let mut seg = crate::dataio::generate_synthetic(&cfg).unwrap();
        seg.samples.remove(40);
        let sm = smooth_segment(&seg, &KalmanConfig::default()).unwrap();
        assert_eq!(sm.times(), seg.times());
    }

    #[test]
    fn smooth_input_barely_moves() {
        let cfg = SyntheticConfig {
            profile: LeaderProfile::Sinusoidal {
                base_speed: 6.0,
                amplitude: 0.5,
                period: 90.0,
            },
            ..Default::default()
        };
        let seg = crate::dataio::generate_synthetic(&cfg).unwrap();
        let sm = smooth_segment(&seg, &KalmanConfig::default()).unwrap();
        for (a, b) in sm.samples.iter().zip(&seg.samples) {
            assert!((a.x_f - b.x_f).abs() < 0.1 && (a.x_l - b.x_l).abs() < 0.1, "{} {} {}", a.t, a.x_f - b.x_f, a.x_l - b.x_l);
        }
    }

    #[test]
    fn smoothing_reduces_spacing_total_variation() {
        let cfg = SyntheticConfig {
            noise_sigma: 0.5,
            seed: 9,
            ..Default::default()
        };
        let seg = crate::dataio::generate_synthetic(&cfg).unwrap();
        let sm = smooth_segment(&seg, &KalmanConfig::default()).unwrap();
        let tv = |s: &TrajectorySegment| {
            s.samples
                .windows(2)
                .map(|w| math::abs(w[1].spacing() - w[0].spacing()))
                .sum::<f64>()
        };
        assert!(tv(&sm) < tv(&seg));
    }
}
