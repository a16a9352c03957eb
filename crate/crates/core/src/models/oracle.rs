//! Replay oracles: models that reproduce (or deliberately distort) the
//! observed follower acceleration. Used as reference points when checking
//! that the scoring framework ranks a perfect model first.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CarFollowingModel, ModelError};
use crate::dataio::CarFollowingState;
use crate::simulation::ObservedGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OracleKind {
    /// Observed acceleration at the current step.
    Perfect,
    /// Observed acceleration plus a constant offset, m/s².
    Biased { offset: f64 },
    /// Observed acceleration plus Gaussian noise of this std, m/s².
    Noisy { sigma: f64, seed: u64 },
    /// Observed acceleration from `steps` steps earlier.
    Lagged { steps: usize },
}

#[derive(Debug, Clone)]
pub struct OracleModel {
    name: String,
    kind: OracleKind,
    observed: Vec<f64>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl OracleModel {
    pub fn new(name: impl Into<String>, kind: OracleKind) -> Self {
        Self {
            name: name.into(),
            kind,
            observed: Vec::new(),
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn kind(&self) -> OracleKind {
        self.kind
    }
}

// FNV-1a, so each segment gets its own noise stream regardless of order.
fn segment_hash(id: &str) -> u64 {
    id.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

impl CarFollowingModel for OracleModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn begin_segment(&mut self, observed: &ObservedGrid) {
        self.observed = observed.a_f.clone();
        self.cursor = 1;
        if let OracleKind::Noisy { seed, .. } = self.kind {
            self.rng = ChaCha8Rng::seed_from_u64(seed ^ segment_hash(&observed.segment_id));
        }
    }

    fn predict(&mut self, _state: &CarFollowingState) -> Result<f64, ModelError> {
        if self.observed.is_empty() {
            return Err(ModelError::InvalidParameters(String::from(
                "replay oracle used before begin_segment",
            )));
        }
        let k = self.cursor.min(self.observed.len() - 1);
        self.cursor += 1;
        let a = match self.kind {
            OracleKind::Perfect => self.observed[k],
            OracleKind::Biased { offset } => self.observed[k] + offset,
            OracleKind::Noisy { sigma, .. } => {
                let noise = Normal::new(0.0, sigma)
                    .map_err(|e| ModelError::InvalidParameters(alloc::format!("{e}")))?
                    .sample(&mut self.rng);
                self.observed[k] + noise
            }
            OracleKind::Lagged { steps } => self.observed[k.saturating_sub(steps)],
        };
        Ok(a)
    }
}
