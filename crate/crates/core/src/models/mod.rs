//! Car-following models: a mapping from [`CarFollowingState`] to commanded
//! follower acceleration.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::dataio::CarFollowingState;
use crate::simulation::ObservedGrid;

mod acc;
mod idm;
pub mod oracle;

pub use acc::{acc_accel, AccModel, AccParameters};
pub use idm::{idm_accel, IdmModel, IdmParameters};

/// Error raised by a model while producing a prediction.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid car-following state: {0}")]
    InvalidState(#[from] StateError),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    /// Failure inside a model backend (external process, deserialised learner).
    #[error("model backend failure: {0}")]
    Backend(Box<dyn core::error::Error + Send + Sync>),
}

/// A state outside the domain every model accepts.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum StateError {
    #[error("spacing must be positive, got {0} m")]
    NonPositiveSpacing(f64),
    #[error("state contains a non-finite field")]
    NonFinite,
}

/// Behavioural contract shared by physics models, learners, replay oracles
/// and external processes.
///
/// `predict` takes `&mut self` so that stateful backends (a subprocess with a
/// single in-flight request, a replay cursor) fit the same interface.
pub trait CarFollowingModel {
    fn name(&self) -> &str;

    fn predict(&mut self, state: &CarFollowingState) -> Result<f64, ModelError>;

    /// Calibratable parameter vector, empty for models without one.
    fn parameters(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Called once before each closed-loop rollout with the observed data on
    /// the simulation grid.
    fn begin_segment(&mut self, _observed: &ObservedGrid) {}
}

impl<M: CarFollowingModel + ?Sized> CarFollowingModel for Box<M> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn predict(&mut self, state: &CarFollowingState) -> Result<f64, ModelError> {
        (**self).predict(state)
    }

    fn parameters(&self) -> Vec<f64> {
        (**self).parameters()
    }

    fn begin_segment(&mut self, observed: &ObservedGrid) {
        (**self).begin_segment(observed)
    }
}

/// Physically plausible acceleration range applied uniformly to every model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelerationBounds {
    pub a_min: f64,
    pub a_max: f64,
}

impl Default for AccelerationBounds {
    fn default() -> Self {
        Self {
            a_min: -3.0,
            a_max: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("acceleration bounds must satisfy a_min < 0 < a_max, got ({a_min}, {a_max})")]
pub struct BoundsError {
    pub a_min: f64,
    pub a_max: f64,
}

impl AccelerationBounds {
    pub fn new(a_min: f64, a_max: f64) -> Result<Self, BoundsError> {
        let b = Self { a_min, a_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), BoundsError> {
        if self.a_min < 0.0 && self.a_max > 0.0 && self.a_min.is_finite() && self.a_max.is_finite() {
            Ok(())
        } else {
            Err(BoundsError {
                a_min: self.a_min,
                a_max: self.a_max,
            })
        }
    }

    #[inline]
    pub fn clamp(&self, a: f64) -> f64 {
        clamp_accel(a, *self)
    }
}

/// `min(max(a, a_min), a_max)`.
#[inline]
pub fn clamp_accel(a: f64, bounds: AccelerationBounds) -> f64 {
    a.max(bounds.a_min).min(bounds.a_max)
}

/// Built-in physics model kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhysicsKind {
    Idm,
    Acc,
}

impl PhysicsKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhysicsKind::Idm => "idm",
            PhysicsKind::Acc => "acc",
        }
    }

    /// Parameter names in vector order.
    pub fn parameter_names(&self) -> &'static [&'static str] {
        match self {
            PhysicsKind::Idm => &IdmParameters::NAMES,
            PhysicsKind::Acc => &AccParameters::NAMES,
        }
    }
}

impl fmt::Display for PhysicsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A model that always predicts the same acceleration.
#[derive(Debug, Clone)]
pub struct ConstantModel {
    pub name: String,
    pub value: f64,
}

impl CarFollowingModel for ConstantModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&mut self, _state: &CarFollowingState) -> Result<f64, ModelError> {
        Ok(self.value)
    }

    fn parameters(&self) -> Vec<f64> {
        alloc::vec![self.value]
    }
}
