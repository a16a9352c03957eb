//! Float helpers shared across modules.
//!
//! Transcendental functions go through `libm` so results are identical with
//! and without `std` linked.

use alloc::vec::Vec;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_pop(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64)
}

/// Median of a non-empty slice (average of the middle pair for even lengths).
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Linear interpolation of `ys` sampled at strictly increasing `ts`.
/// Clamps to the end values outside the sampled range.
pub fn interp(ts: &[f64], ys: &[f64], t: f64) -> f64 {
    debug_assert_eq!(ts.len(), ys.len());
    let n = ts.len();
    if n == 0 {
        return f64::NAN;
    }
    if t <= ts[0] {
        return ys[0];
    }
    if t >= ts[n - 1] {
        return ys[n - 1];
    }
    // first index with ts[i] > t
    let hi = ts.partition_point(|&x| x <= t);
    let lo = hi - 1;
    if ts[lo] == t {
        return ys[lo];
    }
    let w = (t - ts[lo]) / (ts[hi] - ts[lo]);
    ys[lo] + w * (ys[hi] - ys[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interp_hits_knots_exactly() {
        let ts = [0.0, 1.0, 3.0];
        let ys = [1.0, 2.0, 0.0];
        assert_eq!(interp(&ts, &ys, 1.0), 2.0);
        assert_eq!(interp(&ts, &ys, 2.0), 1.0);
        assert_eq!(interp(&ts, &ys, -5.0), 1.0);
        assert_eq!(interp(&ts, &ys, 9.0), 0.0);
    }

    #[test]
    fn population_std() {
        assert_eq!(std_pop(&[2.0, 4.0]), 1.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0]), Some(2.5));
    }
}
