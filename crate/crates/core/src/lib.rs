#![no_std]
#![forbid(unsafe_code)]

//! Calibration and evaluation of car-following models for low-speed
//! autonomous shuttles.
//!
//! The crate is `no_std` + `alloc`: every routine here is a pure function of
//! in-memory data. File formats, the subprocess model adapter and the command
//! line live in the `cfbench` companion crate.
//!
//! Pipeline, in order:
//!
//! 1. [`dataio`]: outlier removal, gap segmentation, feature derivation,
//!    train/validation/test splitting and synthetic trajectory generation.
//! 2. [`smoothing`]: constant-acceleration Kalman filter over position-only
//!    measurements with a per-step transition matrix.
//! 3. [`models`]: the [`CarFollowingModel`](models::CarFollowingModel) trait,
//!    IDM, ACC, acceleration bounds and replay oracles.
//! 4. [`learners`]: gradient-boosted trees, random forest and a feedforward
//!    network trained on the four car-following features.
//! 5. [`calibration`]: genetic-algorithm calibration, expanding-window
//!    cross-validation and seeded random hyperparameter search.
//! 6. [`simulation`]: closed-loop rollout with the leader replayed from data.
//! 7. [`metrics`]: error, stability and similarity metrics per quantity.
//! 8. [`scoring`]: cross-model Z-score normalisation, category scores and the
//!    final ranking.

extern crate alloc;

pub mod calibration;
pub mod dataio;
pub mod learners;
pub mod math;
pub mod metrics;
pub mod models;
pub mod scoring;
pub mod simulation;
pub mod smoothing;

pub use dataio::{CarFollowingState, RawObservation, Sample, TrajectorySegment};
pub use models::{AccParameters, AccelerationBounds, CarFollowingModel, IdmParameters};

/// Simulation and training step, seconds.
pub const DEFAULT_DT: f64 = 1.0;
