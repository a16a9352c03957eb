use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{CarFollowingModel, ModelError};
use crate::dataio::CarFollowingState;
use crate::math;

/// Intelligent Driver Model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParameters {
    /// Desired speed, m/s.
    pub v0: f64,
    /// Desired time headway, s.
    pub t_headway: f64,
    /// Jam spacing, m.
    pub s0: f64,
    /// Maximum acceleration, m/s².
    pub a_max: f64,
    /// Comfortable deceleration, m/s².
    pub b: f64,
    /// Acceleration exponent.
    pub delta: f64,
}

impl Default for IdmParameters {
    fn default() -> Self {
        Self {
            v0: 12.0,
            t_headway: 1.5,
            s0: 2.0,
            a_max: 1.0,
            b: 1.5,
            delta: 4.0,
        }
    }
}

impl IdmParameters {
    pub const NAMES: [&'static str; 6] = ["v0", "t_headway", "s0", "a_max", "b", "delta"];

    pub fn to_vec(&self) -> Vec<f64> {
        alloc::vec![self.v0, self.t_headway, self.s0, self.a_max, self.b, self.delta]
    }

    pub fn from_slice(p: &[f64]) -> Result<Self, ModelError> {
        match *p {
            [v0, t_headway, s0, a_max, b, delta] => Ok(Self {
                v0,
                t_headway,
                s0,
                a_max,
                b,
                delta,
            }),
            _ => Err(ModelError::InvalidParameters(alloc::format!(
                "IDM expects 6 parameters, got {}",
                p.len()
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [self.v0, self.t_headway, self.s0, self.a_max, self.b]
            .iter()
            .all(|x| x.is_finite() && *x > 0.0);
        if positive && self.delta.is_finite() && self.delta >= 1.0 {
            Ok(())
        } else {
            Err(ModelError::InvalidParameters(alloc::format!("{self:?}")))
        }
    }

    /// Equilibrium spacing at speed `v` (`v < v0`), where the IDM acceleration
    /// is exactly zero with both vehicles at `v`.
    pub fn equilibrium_spacing(&self, v: f64) -> f64 {
        (self.s0 + v * self.t_headway) / math::sqrt(1.0 - math::powf(v / self.v0, self.delta))
    }
}

/// Unclamped IDM acceleration.
///
/// The follower speed is `v_prev`; the approach rate is `-dv` because
/// `dv = v_leader - v_follower`. The dynamic part of the desired gap is
/// floored at zero.
pub fn idm_accel(state: &CarFollowingState, p: &IdmParameters) -> Result<f64, ModelError> {
    state.validate()?;
    let v = state.v_prev;
    let approach = -state.dv;
    let dynamic = v * p.t_headway + v * approach / (2.0 * math::sqrt(p.a_max * p.b));
    let s_star = p.s0 + dynamic.max(0.0);
    let free = math::powf(v / p.v0, p.delta);
    let interaction = (s_star / state.ds) * (s_star / state.ds);
    Ok(p.a_max * (1.0 - free - interaction))
}

#[derive(Debug, Clone)]
pub struct IdmModel {
    pub name: String,
    pub params: IdmParameters,
}

impl IdmModel {
    pub fn new(params: IdmParameters) -> Self {
        Self {
            name: String::from("idm"),
            params,
        }
    }
}

impl CarFollowingModel for IdmModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&mut self, state: &CarFollowingState) -> Result<f64, ModelError> {
        idm_accel(state, &self.params)
    }

    fn parameters(&self) -> Vec<f64> {
        self.params.to_vec()
    }
}
