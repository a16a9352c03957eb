use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{RawObservation, Sample, TrajectorySegment};
use crate::math;

/// New segment whenever consecutive timestamps differ by more than this, s.
pub const DEFAULT_GAP_THRESHOLD: f64 = 2.0;
/// Segments shorter than this are not used for training or testing, s.
pub const DEFAULT_MIN_DURATION: f64 = 60.0;

/// Kinematic plausibility bounds used by [`remove_outliers`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierLimits {
    /// Maximum absolute speed, m/s.
    pub v_max: f64,
    /// Maximum absolute acceleration, m/s².
    pub a_max: f64,
}

impl Default for OutlierLimits {
    fn default() -> Self {
        Self {
            v_max: 20.0,
            a_max: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub gap_threshold: f64,
    pub min_duration: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            gap_threshold: DEFAULT_GAP_THRESHOLD,
            min_duration: DEFAULT_MIN_DURATION,
        }
    }
}

#[derive(Clone, Copy)]
struct Kept {
    obs: RawObservation,
    // implied (leader, follower) speeds from the previous kept sample
    speed: Option<(f64, f64)>,
}

/// Drops observations whose implied speed or acceleration, measured against
/// the last accepted observation, exceeds `limits`, along with any sample
/// where the leader is not strictly ahead.
///
/// Each decision depends only on previously accepted samples, so running the
/// filter on its own output removes nothing.
pub fn remove_outliers(obs: &[RawObservation], limits: OutlierLimits) -> Vec<RawObservation> {
    let mut kept: Vec<Kept> = Vec::with_capacity(obs.len());
    for o in obs {
        if o.x_leader - o.x_follower <= 0.0 {
            continue;
        }
        let reported_ok = [o.v_leader, o.v_follower]
            .iter()
            .flatten()
            .all(|v| math::abs(*v) <= limits.v_max);
        if !reported_ok {
            continue;
        }
        let Some(last) = kept.last() else {
            kept.push(Kept { obs: *o, speed: None });
            continue;
        };
        let dt = o.t - last.obs.t;
        if !(dt > 0.0) {
            continue;
        }
        let vl = (o.x_leader - last.obs.x_leader) / dt;
        let vf = (o.x_follower - last.obs.x_follower) / dt;
        if math::abs(vl) > limits.v_max || math::abs(vf) > limits.v_max {
            continue;
        }
        if let Some((pvl, pvf)) = last.speed {
            let al = (vl - pvl) / dt;
            let af = (vf - pvf) / dt;
            if math::abs(al) > limits.a_max || math::abs(af) > limits.a_max {
                continue;
            }
        }
        kept.push(Kept {
            obs: *o,
            speed: Some((vl, vf)),
        });
    }
    kept.into_iter().map(|k| k.obs).collect()
}

/// Gap-delimited runs of observations, split by whether they pass the
/// duration filter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Partition {
    /// `(run, retained)` in input order.
    pub runs: Vec<(Vec<RawObservation>, bool)>,
}

impl Partition {
    pub fn retained(&self) -> impl Iterator<Item = &Vec<RawObservation>> {
        self.runs.iter().filter(|(_, keep)| *keep).map(|(r, _)| r)
    }

    pub fn discarded(&self) -> impl Iterator<Item = &Vec<RawObservation>> {
        self.runs.iter().filter(|(_, keep)| !*keep).map(|(r, _)| r)
    }

    /// Total observed duration before and after the duration filter, s.
    pub fn durations(&self) -> (f64, f64) {
        let dur = |r: &Vec<RawObservation>| match (r.first(), r.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        };
        let all = self.runs.iter().map(|(r, _)| dur(r)).sum();
        let kept = self.retained().map(dur).sum();
        (all, kept)
    }
}

/// Splits observations at every gap larger than the threshold and marks the
/// runs that last at least `min_duration`.
pub fn partition(obs: &[RawObservation], cfg: SegmentationConfig) -> Partition {
    let mut runs: Vec<(Vec<RawObservation>, bool)> = Vec::new();
    let mut current: Vec<RawObservation> = Vec::new();
    let close = |run: Vec<RawObservation>, runs: &mut Vec<(Vec<RawObservation>, bool)>| {
        if run.is_empty() {
            return;
        }
        let d = run[run.len() - 1].t - run[0].t;
        runs.push((run, d >= cfg.min_duration));
    };
    for o in obs {
        if let Some(last) = current.last() {
            if o.t - last.t > cfg.gap_threshold {
                close(core::mem::take(&mut current), &mut runs);
            }
        }
        current.push(*o);
    }
    close(current, &mut runs);
    Partition { runs }
}

/// Cleaned observations → retained trajectory segments.
///
/// Missing speeds are filled by forward differences of position and
/// accelerations by forward differences of speed; the smoothing stage later
/// re-estimates both.
pub fn segment(obs: &[RawObservation], cfg: SegmentationConfig) -> Vec<TrajectorySegment> {
    partition(obs, cfg)
        .retained()
        .enumerate()
        .map(|(i, run)| segment_from_observations(format!("seg-{i:04}"), run))
        .collect()
}

/// Builds a segment from a gap-free run of observations.
pub fn segment_from_observations(id: impl Into<alloc::string::String>, run: &[RawObservation]) -> TrajectorySegment {
    let t: Vec<f64> = run.iter().map(|o| o.t).collect();
    let xl: Vec<f64> = run.iter().map(|o| o.x_leader).collect();
    let xf: Vec<f64> = run.iter().map(|o| o.x_follower).collect();
    let vl = match run.iter().map(|o| o.v_leader).collect::<Option<Vec<f64>>>() {
        Some(v) => v,
        None => forward_difference(&t, &xl),
    };
    let vf = match run.iter().map(|o| o.v_follower).collect::<Option<Vec<f64>>>() {
        Some(v) => v,
        None => forward_difference(&t, &xf),
    };
    let al = forward_difference(&t, &vl);
    let af = forward_difference(&t, &vf);
    let samples = (0..run.len())
        .map(|k| Sample {
            t: t[k],
            x_l: xl[k],
            v_l: vl[k],
            a_l: al[k],
            x_f: xf[k],
            v_f: vf[k],
            a_f: af[k],
        })
        .collect();
    TrajectorySegment::new(id, samples)
}

/// `(y[k+1] − y[k]) / (t[k+1] − t[k])`, last value repeated.
pub(crate) fn forward_difference(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    if n < 2 {
        return alloc::vec![0.0; n];
    }
    let mut d: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (t[k + 1] - t[k])).collect();
    d.push(d[n - 2]);
    d
}
