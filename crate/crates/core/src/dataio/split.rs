use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, TrajectorySegment};

/// Whole-segment assignment to train / validation / test.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<TrajectorySegment>,
    pub validation: Vec<TrajectorySegment>,
    pub test: Vec<TrajectorySegment>,
}

impl DatasetSplit {
    pub fn durations(&self) -> (f64, f64, f64) {
        let d = |v: &[TrajectorySegment]| v.iter().map(TrajectorySegment::duration).sum::<f64>();
        (d(&self.train), d(&self.validation), d(&self.test))
    }
}

/// Test share of the total, then validation share of the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub test: f64,
    pub validation: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            test: 0.25,
            validation: 0.20,
        }
    }
}

/// Duration-weighted greedy assignment, largest segment first.
///
/// Each segment goes to the bucket with the largest remaining duration
/// deficit. The seed only breaks ties between equal-duration segments. When
/// the segments left equal the number of still-empty buckets, they are
/// forced into those buckets so every split is non-empty.
pub fn split(segments: &[TrajectorySegment], ratios: SplitRatios, seed: u64) -> Result<DatasetSplit, DataError> {
    if segments.len() < 3 {
        return Err(DataError::Insufficient {
            what: "segments",
            needed: 3,
            got: segments.len(),
        });
    }
    if !(ratios.test > 0.0 && ratios.test < 1.0 && ratios.validation > 0.0 && ratios.validation < 1.0) {
        return Err(DataError::Config(alloc::format!("split ratios out of (0, 1): {ratios:?}")));
    }
    let total: f64 = segments.iter().map(TrajectorySegment::duration).sum();
    // bucket order: train, validation, test
    let targets = [
        total * (1.0 - ratios.test) * (1.0 - ratios.validation),
        total * (1.0 - ratios.test) * ratios.validation,
        total * ratios.test,
    ];

    let mut order: Vec<usize> = (0..segments.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order.sort_by(|&a, &b| segments[b].duration().total_cmp(&segments[a].duration()));

    let mut assigned = [0.0f64; 3];
    let mut counts = [0usize; 3];
    let mut buckets: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (pos, &i) in order.iter().enumerate() {
        let remaining = order.len() - pos;
        let empty: Vec<usize> = (0..3).filter(|&b| counts[b] == 0).collect();
        let candidates: Vec<usize> = if remaining <= empty.len() { empty } else { (0..3).collect() };
        let mut best = candidates[0];
        for &b in &candidates[1..] {
            if targets[b] - assigned[b] > targets[best] - assigned[best] {
                best = b;
            }
        }
        assigned[best] += segments[i].duration();
        counts[best] += 1;
        buckets[best].push(i);
    }

    let collect = |idx: &mut Vec<usize>| {
        idx.sort_unstable();
        idx.iter().map(|&i| segments[i].clone()).collect::<Vec<_>>()
    };
    let [mut tr, mut va, mut te] = buckets;
    Ok(DatasetSplit {
        train: collect(&mut tr),
        validation: collect(&mut va),
        test: collect(&mut te),
    })
}
