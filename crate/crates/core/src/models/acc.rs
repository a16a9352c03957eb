use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{CarFollowingModel, ModelError};
use crate::dataio::CarFollowingState;

/// Constant-time-gap linear ACC controller gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccParameters {
    /// Gap-error gain, 1/s².
    pub k1: f64,
    /// Speed-error gain, 1/s.
    pub k2: f64,
    /// Desired time headway, s.
    pub t_hw: f64,
    /// Standstill gap, m.
    pub s0: f64,
}

impl Default for AccParameters {
    fn default() -> Self {
        Self {
            k1: 0.23,
            k2: 0.07,
            t_hw: 1.6,
            s0: 2.0,
        }
    }
}

impl AccParameters {
    pub const NAMES: [&'static str; 4] = ["k1", "k2", "t_hw", "s0"];

    pub fn to_vec(&self) -> Vec<f64> {
        alloc::vec![self.k1, self.k2, self.t_hw, self.s0]
    }

    pub fn from_slice(p: &[f64]) -> Result<Self, ModelError> {
        match *p {
            [k1, k2, t_hw, s0] => Ok(Self { k1, k2, t_hw, s0 }),
            _ => Err(ModelError::InvalidParameters(alloc::format!(
                "ACC expects 4 parameters, got {}",
                p.len()
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.k1 > 0.0 && self.k2 > 0.0 && self.t_hw > 0.0 && self.s0 >= 0.0 {
            Ok(())
        } else {
            Err(ModelError::InvalidParameters(alloc::format!("{self:?}")))
        }
    }

    pub fn equilibrium_spacing(&self, v: f64) -> f64 {
        self.s0 + self.t_hw * v
    }
}

/// `k1·(ds − s0 − t_hw·v_prev) + k2·dv`, unclamped.
pub fn acc_accel(state: &CarFollowingState, p: &AccParameters) -> Result<f64, ModelError> {
    state.validate()?;
    let gap_error = state.ds - p.s0 - p.t_hw * state.v_prev;
    Ok(p.k1 * gap_error + p.k2 * state.dv)
}

#[derive(Debug, Clone)]
pub struct AccModel {
    pub name: String,
    pub params: AccParameters,
}

impl AccModel {
    pub fn new(params: AccParameters) -> Self {
        Self {
            name: String::from("acc"),
            params,
        }
    }
}

impl CarFollowingModel for AccModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&mut self, state: &CarFollowingState) -> Result<f64, ModelError> {
        acc_accel(state, &self.params)
    }

    fn parameters(&self) -> Vec<f64> {
        self.params.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(dv: f64, ds: f64, v_prev: f64) -> CarFollowingState {
        CarFollowingState {
            dv,
            ds,
            a_prev: 0.0,
            v_prev,
        }
    }

    #[test]
    fn equilibrium_is_zero() {
        let p = AccParameters::default();
        let v = 7.0;
        let a = acc_accel(&state(0.0, p.s0 + p.t_hw * v, v), &p).unwrap();
        assert_eq!(a, 0.0);
    }

    #[test]
    fn arithmetic_example() {
        let p = AccParameters {
            k1: 0.23,
            k2: 0.07,
            t_hw: 1.6,
            s0: 2.0,
        };
        let a = acc_accel(&state(1.0, 20.0, 8.0), &p).unwrap();
        assert!((a - 1.266).abs() < 1e-12, "{a}");
    }

    #[test]
    fn doubling_errors_doubles_output() {
        let p = AccParameters::default();
        let v = 5.0;
        let eq = p.s0 + p.t_hw * v;
        let a1 = acc_accel(&state(0.5, eq + 3.0, v), &p).unwrap();
        let a2 = acc_accel(&state(1.0, eq + 6.0, v), &p).unwrap();
        assert!((a2 - 2.0 * a1).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn affine_superposition(
            dv1 in -5.0f64..5.0, ds1 in 1.0f64..50.0, v1 in 0.0f64..15.0,
            dv2 in -5.0f64..5.0, ds2 in 1.0f64..50.0, v2 in 0.0f64..15.0,
        ) {
            let p = AccParameters::default();
            let f = |dv, ds, v| acc_accel(&state(dv, ds, v), &p).unwrap();
            let origin = p.k1 * -p.s0; // value at dv = ds = v = 0
            let lhs = f(dv1 + dv2, ds1 + ds2, v1 + v2) - origin;
            let rhs = (f(dv1, ds1, v1) - origin) + (f(dv2, ds2, v2) - origin);
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
