use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use super::CalibrationError;

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvFold {
    pub train: Range<usize>,
    pub validation: Range<usize>,
}

/// Expanding-window folds over time-sorted pairs: fold `k` trains on the
/// first `k` blocks and validates on block `k + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub n_pairs: usize,
    pub folds: Vec<CvFold>,
}

impl CvPlan {
    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }
}

/// `times` are the pair timestamps; they must be strictly increasing.
pub fn make_cv_plan(times: &[f64], n_folds: usize) -> Result<CvPlan, CalibrationError> {
    if n_folds == 0 {
        return Err(CalibrationError::Config("n_folds must be at least 1".into()));
    }
    let n = times.len();
    let blocks = n_folds + 1;
    if n < blocks {
        return Err(CalibrationError::Insufficient { needed: blocks, got: n });
    }
    if let Some(i) = times.windows(2).position(|w| !(w[0] < w[1])) {
        return Err(CalibrationError::Unsorted(i + 1));
    }
    let (base, extra) = (n / blocks, n % blocks);
    let mut bounds = Vec::with_capacity(blocks + 1);
    bounds.push(0usize);
    for b in 0..blocks {
        let size = base + usize::from(b < extra);
        bounds.push(bounds[b] + size);
    }
    let folds = (1..blocks)
        .map(|k| CvFold {
            train: 0..bounds[k],
            validation: bounds[k]..bounds[k + 1],
        })
        .collect();
    Ok(CvPlan { n_pairs: n, folds })
}
