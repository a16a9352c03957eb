//! Trajectory data: raw observations, cleaned segments, car-following
//! features, dataset splits and synthetic benchmark trajectories.
//!
//! Sign convention: `dv = v_leader − v_follower` everywhere in the crate.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::models::StateError;

mod clean;
mod features;
mod split;
pub mod synthetic;

pub use clean::{
    partition, remove_outliers, segment, segment_from_observations, OutlierLimits, Partition,
    SegmentationConfig, DEFAULT_GAP_THRESHOLD, DEFAULT_MIN_DURATION,
};
pub use features::{derive_features, FeatureSet};
pub use split::{split, DatasetSplit, SplitRatios};
pub use synthetic::{
    generate_synthetic, generate_synthetic_with_truth, LeaderProfile, SyntheticConfig,
    SyntheticFollower, SyntheticTrajectory,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("feature derivation failed at sample {index} (t = {t} s): {source}")]
    Feature {
        index: usize,
        t: f64,
        source: StateError,
    },
    #[error("segment {0} has fewer than 2 samples")]
    TooShort(String),
    #[error("insufficient data: need at least {needed} {what}, got {got}")]
    Insufficient {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("synthetic follower collided with the leader at t = {t} s (spacing {spacing} m)")]
    Collision { t: f64, spacing: f64 },
    #[error("follower model failed during generation: {0}")]
    Model(String),
}

/// One row of a raw trajectory file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawObservation {
    pub t: f64,
    pub x_leader: f64,
    pub x_follower: f64,
    pub v_leader: Option<f64>,
    pub v_follower: Option<f64>,
}

impl RawObservation {
    pub fn new(t: f64, x_leader: f64, x_follower: f64) -> Self {
        Self {
            t,
            x_leader,
            x_follower,
            v_leader: None,
            v_follower: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.x_leader.is_finite()
            && self.x_follower.is_finite()
            && self.v_leader.map_or(true, f64::is_finite)
            && self.v_follower.map_or(true, f64::is_finite)
    }
}

/// Kinematic state of both vehicles at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x_l: f64,
    pub v_l: f64,
    pub a_l: f64,
    pub x_f: f64,
    pub v_f: f64,
    pub a_f: f64,
}

impl Sample {
    #[inline]
    pub fn spacing(&self) -> f64 {
        self.x_l - self.x_f
    }
}

/// A gap-free stretch of leader/follower data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub id: String,
    pub samples: Vec<Sample>,
    /// Nominal step (median sample spacing), seconds.
    pub dt: f64,
}

impl TrajectorySegment {
    pub fn new(id: impl Into<String>, samples: Vec<Sample>) -> Self {
        let dt = nominal_dt(&samples);
        Self {
            id: id.into(),
            samples,
            dt,
        }
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn start_time(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.t)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }
}

fn nominal_dt(samples: &[Sample]) -> f64 {
    let diffs: Vec<f64> = samples.windows(2).map(|w| w[1].t - w[0].t).collect();
    crate::math::median(&diffs).unwrap_or(0.0)
}

/// The four model inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarFollowingState {
    /// Leader speed minus follower speed, m/s.
    pub dv: f64,
    /// Leader position minus follower position, m.
    pub ds: f64,
    /// Follower acceleration at the previous step, m/s².
    pub a_prev: f64,
    /// Follower speed at the previous step, m/s.
    pub v_prev: f64,
}

impl CarFollowingState {
    pub const FEATURE_NAMES: [&'static str; 4] = ["dv", "ds", "a_prev", "v_prev"];

    pub fn validate(&self) -> Result<(), StateError> {
        if !(self.dv.is_finite() && self.ds.is_finite() && self.a_prev.is_finite() && self.v_prev.is_finite()) {
            return Err(StateError::NonFinite);
        }
        if self.ds <= 0.0 {
            return Err(StateError::NonPositiveSpacing(self.ds));
        }
        Ok(())
    }

    #[inline]
    pub fn to_array(&self) -> [f64; 4] {
        [self.dv, self.ds, self.a_prev, self.v_prev]
    }

    #[inline]
    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            dv: a[0],
            ds: a[1],
            a_prev: a[2],
            v_prev: a[3],
        }
    }
}
