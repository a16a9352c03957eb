use alloc::string::ToString;
use alloc::vec::Vec;

use super::{CarFollowingState, DataError, TrajectorySegment};

/// One `(state, target)` pair per sample index `t ≥ 1`: the state combines
/// the current spacing and speed difference with the follower's previous
/// acceleration and speed; the target is the follower's acceleration at `t`.
pub fn derive_features(seg: &TrajectorySegment) -> Result<Vec<(CarFollowingState, f64)>, DataError> {
    if seg.samples.len() < 2 {
        return Err(DataError::TooShort(seg.id.to_string()));
    }
    seg.samples
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let (prev, cur) = (&w[0], &w[1]);
            let state = CarFollowingState {
                dv: cur.v_l - cur.v_f,
                ds: cur.x_l - cur.x_f,
                a_prev: prev.a_f,
                v_prev: prev.v_f,
            };
            state.validate().map_err(|source| DataError::Feature {
                index: k + 1,
                t: cur.t,
                source,
            })?;
            Ok((state, cur.a_f))
        })
        .collect()
}

/// Time-ordered training pairs pooled from several segments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSet {
    pub times: Vec<f64>,
    pub states: Vec<CarFollowingState>,
    pub targets: Vec<f64>,
}

impl FeatureSet {
    /// Pools pairs from `segments` in order of segment start time.
    pub fn from_segments(segments: &[TrajectorySegment]) -> Result<Self, DataError> {
        let mut order: Vec<&TrajectorySegment> = segments.iter().collect();
        order.sort_by(|a, b| a.start_time().total_cmp(&b.start_time()));
        let mut out = Self::default();
        for seg in order {
            for ((state, target), s) in derive_features(seg)?.into_iter().zip(&seg.samples[1..]) {
                out.times.push(s.t);
                out.states.push(state);
                out.targets.push(target);
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Sub-set by index list, preserving the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            times: idx.iter().map(|&i| self.times[i]).collect(),
            states: idx.iter().map(|&i| self.states[i]).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
        }
    }

    pub fn slice(&self, range: core::ops::Range<usize>) -> Self {
        Self {
            times: self.times[range.clone()].to_vec(),
            states: self.states[range.clone()].to_vec(),
            targets: self.targets[range].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Sample;

    fn cruising(n: usize) -> TrajectorySegment {
        let samples = (0..n)
            .map(|k| {
                let t = k as f64;
                Sample {
                    t,
                    x_l: 20.0 + 6.0 * t,
                    v_l: 6.0,
                    a_l: 0.0,
                    x_f: 6.0 * t,
                    v_f: 6.0,
                    a_f: 0.0,
                }
            })
            .collect();
        TrajectorySegment::new("cruise", samples)
    }

    #[test]
    fn constant_speed_pairs() {
        let pairs = derive_features(&cruising(30)).unwrap();
        assert_eq!(pairs.len(), 29);
        for (s, a) in pairs {
            assert_eq!((s.dv, s.ds, a), (0.0, 20.0, 0.0));
        }
    }

    #[test]
    fn two_samples_give_one_pair() {
        assert_eq!(derive_features(&cruising(2)).unwrap().len(), 1);
        assert!(matches!(derive_features(&cruising(1)), Err(DataError::TooShort(_))));
    }

    #[test]
    fn degenerate_spacing_names_the_sample() {
        let mut seg = cruising(5);
        seg.samples[3].x_f = seg.samples[3].x_l;
        match derive_features(&seg) {
            Err(DataError::Feature { index, t, .. }) => {
                assert_eq!(index, 3);
                assert_eq!(t, 3.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn target_equals_next_a_prev() {
        let mut seg = cruising(10);
        for (k, s) in seg.samples.iter_mut().enumerate() {
            s.a_f = crate::math::sin(k as f64 * 0.37);
        }
        let pairs = derive_features(&seg).unwrap();
        for w in pairs.windows(2) {
            assert_eq!(w[0].1, w[1].0.a_prev);
        }
    }

    #[test]
    fn pooling_orders_by_start_time() {
        let mut late = cruising(5);
        for s in &mut late.samples {
            s.t += 100.0;
        }
        let fs = FeatureSet::from_segments(&[late, cruising(5)]).unwrap();
        assert_eq!(fs.len(), 8);
        assert!(fs.times.windows(2).all(|w| w[0] < w[1]));
    }
}
