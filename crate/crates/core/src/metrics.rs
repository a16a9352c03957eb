//! Error, stability and similarity metrics between an observed and a
//! simulated series, and their duration-weighted aggregation per model.
//!
//! All standard deviations are population standard deviations.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::simulation::SimulatedTrajectory;

/// Floor used when dividing by a mean or reference value.
pub const EPSILON: f64 = 1e-6;
/// Default high-frequency cutoff as a fraction of the Nyquist frequency.
pub const DEFAULT_FFT_CUTOFF: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("series lengths differ: observed {observed}, simulated {simulated}")]
    Alignment { observed: usize, simulated: usize },
    #[error("timestamps of the observed and simulated series differ at index {0}")]
    Timestamps(usize),
    #[error("need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("no segments to evaluate")]
    NoSegments,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Acceleration,
    Speed,
    Position,
}

impl Quantity {
    pub const ALL: [Quantity; 3] = [Quantity::Acceleration, Quantity::Speed, Quantity::Position];

    pub fn as_str(&self) -> &'static str {
        match self {
            Quantity::Acceleration => "acceleration",
            Quantity::Speed => "speed",
            Quantity::Position => "position",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|q| q.as_str() == s)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Error,
    Stability,
    Similarity,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Error, Category::Stability, Category::Similarity];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Error => "error",
            Category::Stability => "stability",
            Category::Similarity => "similarity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Report columns. `Fft` and `Cv` hold relative differences against the
/// observed series, not the raw stability values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mae,
    Rmse,
    Mse,
    Fft,
    TheilU,
    TheilB,
    TheilV,
    TheilC,
    Cv,
    Ks,
    Emd,
    Dtw,
}

impl Metric {
    pub const ALL: [Metric; 12] = [
        Metric::Mae,
        Metric::Rmse,
        Metric::Mse,
        Metric::Fft,
        Metric::TheilU,
        Metric::TheilB,
        Metric::TheilV,
        Metric::TheilC,
        Metric::Cv,
        Metric::Ks,
        Metric::Emd,
        Metric::Dtw,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Mae => "mae",
            Metric::Rmse => "rmse",
            Metric::Mse => "mse",
            Metric::Fft => "fft",
            Metric::TheilU => "theil_u",
            Metric::TheilB => "theil_b",
            Metric::TheilV => "theil_v",
            Metric::TheilC => "theil_c",
            Metric::Cv => "cv",
            Metric::Ks => "ks",
            Metric::Emd => "emd",
            Metric::Dtw => "dtw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    pub fn category(&self) -> Category {
        match self {
            Metric::Mae | Metric::Rmse | Metric::Mse => Category::Error,
            Metric::Fft | Metric::TheilU | Metric::TheilB | Metric::TheilV | Metric::TheilC | Metric::Cv => {
                Category::Stability
            }
            Metric::Ks | Metric::Emd | Metric::Dtw => Category::Similarity,
        }
    }

    /// True only for Theil C, where larger values mean better trend agreement.
    pub fn higher_is_better(&self) -> bool {
        matches!(self, Metric::TheilC)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Observed and simulated values of one quantity on a shared time grid.
#[derive(Debug, Clone, Copy)]
pub struct SeriesPair<'a> {
    pub quantity: Quantity,
    pub t: &'a [f64],
    pub observed: &'a [f64],
    pub simulated: &'a [f64],
}

impl<'a> SeriesPair<'a> {
    pub fn new(
        quantity: Quantity,
        t: &'a [f64],
        observed: &'a [f64],
        simulated: &'a [f64],
    ) -> Result<Self, MetricError> {
        check_aligned(observed, simulated)?;
        if t.len() != observed.len() {
            return Err(MetricError::Timestamps(t.len().min(observed.len())));
        }
        Ok(Self {
            quantity,
            t,
            observed,
            simulated,
        })
    }

    /// Nominal sample step.
    pub fn dt(&self) -> f64 {
        if self.t.len() < 2 {
            return 1.0;
        }
        (self.t[self.t.len() - 1] - self.t[0]) / (self.t.len() - 1) as f64
    }
}

fn check_aligned(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::Alignment {
            observed: a.len(),
            simulated: b.len(),
        });
    }
    if a.is_empty() {
        return Err(MetricError::TooShort { needed: 1, got: 0 });
    }
    Ok(())
}

pub fn mae(observed: &[f64], simulated: &[f64]) -> Result<f64, MetricError> {
    check_aligned(observed, simulated)?;
    let s: f64 = observed.iter().zip(simulated).map(|(o, s)| math::abs(s - o)).sum();
    Ok(s / observed.len() as f64)
}

pub fn mse(observed: &[f64], simulated: &[f64]) -> Result<f64, MetricError> {
    check_aligned(observed, simulated)?;
    let s: f64 = observed.iter().zip(simulated).map(|(o, s)| (s - o) * (s - o)).sum();
    Ok(s / observed.len() as f64)
}

pub fn rmse(observed: &[f64], simulated: &[f64]) -> Result<f64, MetricError> {
    mse(observed, simulated).map(math::sqrt)
}

/// Share of spectral power above `cutoff_fraction` of the Nyquist frequency,
/// after removing the mean. A constant series has ratio 0.
pub fn fft_oscillation(series: &[f64], cutoff_fraction: f64) -> Result<f64, MetricError> {
    let n = series.len();
    if n < 8 {
        return Err(MetricError::TooShort { needed: 8, got: n });
    }
    let m = math::mean(series);
    let centred: Vec<f64> = series.iter().map(|x| x - m).collect();
    // twiddles indexed by (j·k) mod n keep the angles exact
    let cos_t: Vec<f64> = (0..n).map(|j| math::cos(2.0 * PI * j as f64 / n as f64)).collect();
    let sin_t: Vec<f64> = (0..n).map(|j| math::sin(2.0 * PI * j as f64 / n as f64)).collect();
    let (mut high, mut total) = (0.0, 0.0);
    for k in 0..n {
        let (mut re, mut im) = (0.0, 0.0);
        for (j, x) in centred.iter().enumerate() {
            let idx = (j * k) % n;
            re += x * cos_t[idx];
            im -= x * sin_t[idx];
        }
        let power = re * re + im * im;
        total += power;
        // f / f_nyquist = 2·min(k, n − k) / n
        if 2.0 * (k.min(n - k)) as f64 > cutoff_fraction * n as f64 {
            high += power;
        }
    }
    // leakage of rounding noise from a constant series
    if total <= 1e-24 * n as f64 {
        return Ok(0.0);
    }
    Ok((high / total).clamp(0.0, 1.0))
}

/// Theil inequality coefficient and its bias / variance / covariance
/// proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theil {
    pub u: f64,
    pub b: f64,
    pub v: f64,
    pub c: f64,
}

/// `u = rmse / (rms(obs) + rms(sim))`; with `mse > 0` the three proportions
/// sum to one. When `mse = 0` the result is `(u, b, v, c) = (0, 0, 0, 1)`.
pub fn theil_decomposition(observed: &[f64], simulated: &[f64]) -> Result<Theil, MetricError> {
    check_aligned(observed, simulated)?;
    let n = observed.len();
    if n < 2 {
        return Err(MetricError::TooShort { needed: 2, got: n });
    }
    let mse = mse(observed, simulated)?;
    if mse == 0.0 {
        return Ok(Theil {
            u: 0.0,
            b: 0.0,
            v: 0.0,
            c: 1.0,
        });
    }
    let nf = n as f64;
    let rms = |x: &[f64]| math::sqrt(x.iter().map(|v| v * v).sum::<f64>() / nf);
    let (mo, ms) = (math::mean(observed), math::mean(simulated));
    let (so, ss) = (math::std_pop(observed), math::std_pop(simulated));
    let cov = observed.iter().zip(simulated).map(|(o, s)| (o - mo) * (s - ms)).sum::<f64>() / nf;
    let denom = rms(observed) + rms(simulated);
    let b = (ms - mo) * (ms - mo) / mse;
    let v = (ss - so) * (ss - so) / mse;
    // 2(1 − r)·σs·σo with r = cov / (σs·σo)
    let c = 2.0 * (ss * so - cov) / mse;
    Ok(Theil {
        u: if denom > 0.0 { math::sqrt(mse) / denom } else { 0.0 },
        b,
        v,
        c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientOfVariation {
    pub value: f64,
    /// `|mean| < EPSILON`; the value is then `std / EPSILON`.
    pub degenerate: bool,
}

pub fn coefficient_of_variation(series: &[f64]) -> Result<CoefficientOfVariation, MetricError> {
    if series.len() < 2 {
        return Err(MetricError::TooShort {
            needed: 2,
            got: series.len(),
        });
    }
    let m = math::abs(math::mean(series));
    let sd = math::std_pop(series);
    Ok(CoefficientOfVariation {
        value: sd / m.max(EPSILON),
        degenerate: m < EPSILON,
    })
}

/// `|simulated − observed| / max(|observed|, EPSILON)`.
pub fn relative_difference(simulated: f64, observed: f64) -> f64 {
    math::abs(simulated - observed) / math::abs(observed).max(EPSILON)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::TooShort { needed: 1, got: 0 });
    }
    let (sa, sb) = (sorted(a), sorted(b));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < sa.len() || j < sb.len() {
        let x = match (sa.get(i), sb.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => break,
        };
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max(math::abs(i as f64 / na - j as f64 / nb));
    }
    Ok(d)
}

/// 1-Wasserstein distance between the empirical distributions of `a`, `b`.
pub fn emd_1d(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::TooShort { needed: 1, got: 0 });
    }
    let (sa, sb) = (sorted(a), sorted(b));
    if sa.len() == sb.len() {
        return Ok(sa.iter().zip(&sb).map(|(x, y)| math::abs(x - y)).sum::<f64>() / sa.len() as f64);
    }
    // ∫ |F_a − F_b| dx over the pooled support
    let mut pooled: Vec<f64> = sa.iter().chain(&sb).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut total = 0.0;
    for w in pooled.windows(2) {
        let x = w[0];
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        total += math::abs(i as f64 / na - j as f64 / nb) * (w[1] - w[0]);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dtw {
    /// Minimal cumulative absolute-difference cost.
    pub raw: f64,
    /// `raw / (n + m)`.
    pub normalized: f64,
}

/// Unconstrained dynamic time warping with both endpoints matched.
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<Dtw, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::TooShort { needed: 1, got: 0 });
    }
    let m = b.len();
    let mut prev = alloc::vec![f64::INFINITY; m + 1];
    let mut cur = alloc::vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for x in a {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let cost = math::abs(x - b[j - 1]);
            cur[j] = cost + prev[j - 1].min(prev[j]).min(cur[j - 1]);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    let raw = prev[m];
    Ok(Dtw {
        raw,
        normalized: raw / (a.len() + m) as f64,
    })
}

/// Per-metric evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub fft_cutoff: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            fft_cutoff: DEFAULT_FFT_CUTOFF,
        }
    }
}

/// All twelve columns for one segment and quantity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentMetrics {
    pub values: BTreeMap<Metric, f64>,
    /// Metrics that could not be computed, with the reason.
    pub errors: BTreeMap<Metric, String>,
    pub flags: Vec<String>,
}

pub fn segment_metrics(pair: &SeriesPair<'_>, cfg: &MetricConfig) -> SegmentMetrics {
    let (o, s) = (pair.observed, pair.simulated);
    let mut out = SegmentMetrics::default();
    let put = |out: &mut SegmentMetrics, m: Metric, r: Result<f64, MetricError>| match r {
        Ok(v) => {
            out.values.insert(m, v);
        }
        Err(e) => {
            out.errors.insert(m, alloc::format!("{e}"));
        }
    };
    put(&mut out, Metric::Mae, mae(o, s));
    put(&mut out, Metric::Rmse, rmse(o, s));
    put(&mut out, Metric::Mse, mse(o, s));
    let fft = fft_oscillation(o, cfg.fft_cutoff)
        .and_then(|fo| fft_oscillation(s, cfg.fft_cutoff).map(|fs| relative_difference(fs, fo)));
    put(&mut out, Metric::Fft, fft);
    match theil_decomposition(o, s) {
        Ok(t) => {
            out.values.insert(Metric::TheilU, t.u);
            out.values.insert(Metric::TheilB, t.b);
            out.values.insert(Metric::TheilV, t.v);
            out.values.insert(Metric::TheilC, t.c);
        }
        Err(e) => {
            for m in [Metric::TheilU, Metric::TheilB, Metric::TheilV, Metric::TheilC] {
                out.errors.insert(m, alloc::format!("{e}"));
            }
        }
    }
    match (coefficient_of_variation(o), coefficient_of_variation(s)) {
        (Ok(co), Ok(cs)) => {
            if co.degenerate || cs.degenerate {
                out.flags.push(String::from("cv_degenerate_mean"));
            }
            out.values.insert(Metric::Cv, relative_difference(cs.value, co.value));
        }
        (Err(e), _) | (_, Err(e)) => {
            out.errors.insert(Metric::Cv, alloc::format!("{e}"));
        }
    }
    put(&mut out, Metric::Ks, ks_statistic(o, s));
    put(&mut out, Metric::Emd, emd_1d(o, s));
    put(&mut out, Metric::Dtw, dtw_distance(o, s).map(|d| d.raw));
    out
}

/// One aggregated cell of a [`MetricReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    /// Duration-weighted mean over the segments where the metric exists.
    pub value: Option<f64>,
    pub n_segments: usize,
    pub flags: Vec<String>,
}

/// The metric × quantity matrix for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub cells: BTreeMap<(Quantity, Metric), MetricCell>,
    /// Per-segment weights (durations) in evaluation order.
    pub weights: Vec<(String, f64)>,
}

impl MetricReport {
    pub fn value(&self, q: Quantity, m: Metric) -> Option<f64> {
        self.cells.get(&(q, m)).and_then(|c| c.value)
    }
}

/// Computes every metric per segment and quantity, then aggregates across
/// segments weighted by segment duration (equal weights if every duration is
/// zero).
pub fn evaluate_model(
    model: &str,
    trajectories: &[SimulatedTrajectory],
    cfg: &MetricConfig,
) -> Result<MetricReport, MetricError> {
    if trajectories.is_empty() {
        return Err(MetricError::NoSegments);
    }
    let durations: Vec<f64> = trajectories.iter().map(SimulatedTrajectory::duration).collect();
    let weights: Vec<f64> = if durations.iter().all(|d| *d <= 0.0) {
        alloc::vec![1.0; durations.len()]
    } else {
        durations
    };

    let mut per_segment: Vec<BTreeMap<Quantity, SegmentMetrics>> = Vec::new();
    for traj in trajectories {
        let t = traj.column(|s| s.t);
        let mut by_q = BTreeMap::new();
        for q in Quantity::ALL {
            let (o, s) = match q {
                Quantity::Acceleration => (traj.column(|s| s.a_obs), traj.column(|s| s.a)),
                Quantity::Speed => (traj.column(|s| s.v_obs), traj.column(|s| s.v)),
                Quantity::Position => (traj.column(|s| s.x_obs), traj.column(|s| s.x)),
            };
            let pair = SeriesPair::new(q, &t, &o, &s)?;
            by_q.insert(q, segment_metrics(&pair, cfg));
        }
        per_segment.push(by_q);
    }

    let mut cells = BTreeMap::new();
    for q in Quantity::ALL {
        for m in Metric::ALL {
            let (mut num, mut den, mut n) = (0.0, 0.0, 0usize);
            let mut flags: Vec<String> = Vec::new();
            for (seg, w) in per_segment.iter().zip(&weights) {
                let sm = &seg[&q];
                match sm.values.get(&m) {
                    Some(v) => {
                        num += w * v;
                        den += w;
                        n += 1;
                    }
                    None => {
                        if !flags.iter().any(|f| f == "missing_segments") {
                            flags.push(String::from("missing_segments"));
                        }
                    }
                }
                if m == Metric::Cv {
                    for f in &sm.flags {
                        if !flags.contains(f) {
                            flags.push(f.clone());
                        }
                    }
                }
            }
            let value = if n > 0 {
                Some(if den > 0.0 { num / den } else { 0.0 })
            } else {
                None
            };
            cells.insert((q, m), MetricCell { value, n_segments: n, flags });
        }
    }
    Ok(MetricReport {
        model: String::from(model),
        cells,
        weights: trajectories
            .iter()
            .zip(&weights)
            .map(|(t, w)| (t.segment_id.clone(), *w))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::AccelerationBounds;
    use crate::simulation::SimStep;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn identical_series_have_zero_error() {
        let x = [1.0, 2.0, 4.0, 3.0];
        assert_eq!(mae(&x, &x).unwrap(), 0.0);
        assert_eq!(rmse(&x, &x).unwrap(), 0.0);
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn unit_offset() {
        let x = [1.0, 2.0, 4.0, 3.0];
        let y = [2.0, 3.0, 5.0, 4.0];
        assert_eq!(mae(&x, &y).unwrap(), 1.0);
        assert_eq!(rmse(&x, &y).unwrap(), 1.0);
        assert_eq!(mse(&x, &y).unwrap(), 1.0);
    }

    #[test]
    fn misaligned_series_are_rejected() {
        assert!(matches!(mae(&[1.0], &[1.0, 2.0]), Err(MetricError::Alignment { .. })));
    }

    #[test]
    fn error_metrics_match_direct_summation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = rng.random_range(1..=10);
            let o: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let (mut sa, mut sq) = (0.0, 0.0);
            for i in 0..n {
                let d = s[i] - o[i];
                sa += if d < 0.0 { -d } else { d };
                sq += d * d;
            }
            let nf = n as f64;
            assert!((mae(&o, &s).unwrap() - sa / nf).abs() < 1e-12);
            assert!((mse(&o, &s).unwrap() - sq / nf).abs() < 1e-12);
            assert!((rmse(&o, &s).unwrap() - math::sqrt(sq / nf)).abs() < 1e-12);
        }
    }

    #[test]
    fn fft_constant_and_alternating() {
        assert_eq!(fft_oscillation(&[3.0; 16], 0.5).unwrap(), 0.0);
        let alt: Vec<f64> = (0..16).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((fft_oscillation(&alt, 0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!(fft_oscillation(&[1.0; 7], 0.5).is_err());
    }

    #[test]
    fn fft_two_tone_splits_evenly() {
        // 0.1·Nyquist and 0.8·Nyquist tones of equal amplitude
        let n = 200;
        let x: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64;
                math::sin(PI * 0.1 * t) + math::sin(PI * 0.8 * t + 0.3)
            })
            .collect();
        let r = fft_oscillation(&x, 0.5).unwrap();
        assert!((r - 0.5).abs() < 0.05, "{r}");
    }

    #[test]
    fn theil_identity_and_pure_bias() {
        let o = [1.0, 3.0, 2.0, 5.0];
        let t = theil_decomposition(&o, &o).unwrap();
        assert_eq!((t.u, t.b, t.v, t.c), (0.0, 0.0, 0.0, 1.0));
        let s: Vec<f64> = o.iter().map(|x| x + 0.7).collect();
        let t = theil_decomposition(&o, &s).unwrap();
        assert!((t.b - 1.0).abs() < 1e-12 && t.v.abs() < 1e-12 && t.c.abs() < 1e-12);
    }

    #[test]
    fn theil_matches_direct_formula() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let n = rng.random_range(2..=20);
            let o: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let nf = n as f64;
            let mo = o.iter().sum::<f64>() / nf;
            let ms = s.iter().sum::<f64>() / nf;
            let so = math::sqrt(o.iter().map(|x| (x - mo) * (x - mo)).sum::<f64>() / nf);
            let ss = math::sqrt(s.iter().map(|x| (x - ms) * (x - ms)).sum::<f64>() / nf);
            let r = o.iter().zip(&s).map(|(a, b)| (a - mo) * (b - ms)).sum::<f64>() / nf / (so * ss);
            let mse_d = o.iter().zip(&s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / nf;
            let t = theil_decomposition(&o, &s).unwrap();
            assert!((t.b - (ms - mo) * (ms - mo) / mse_d).abs() < 1e-9);
            assert!((t.v - (ss - so) * (ss - so) / mse_d).abs() < 1e-9);
            assert!((t.c - 2.0 * (1.0 - r) * ss * so / mse_d).abs() < 1e-9);
            assert!((t.b + t.v + t.c - 1.0).abs() < 1e-9);
            assert!(t.u >= 0.0 && t.u <= 1.0);
        }
    }

    #[test]
    fn cv_examples() {
        assert_eq!(coefficient_of_variation(&[5.0, 5.0, 5.0]).unwrap().value, 0.0);
        let cv = coefficient_of_variation(&[2.0, 4.0]).unwrap();
        assert!((cv.value - 1.0 / 3.0).abs() < 1e-15 && !cv.degenerate);
        let cv = coefficient_of_variation(&[-1.0, 1.0]).unwrap();
        assert!(cv.degenerate);
        assert_eq!(cv.value, 1.0 / EPSILON);
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_statistic(&[1.0, 2.0], &[5.0, 6.0, 7.0]).unwrap(), 1.0);
    }

    #[test]
    fn emd_examples() {
        assert_eq!(emd_1d(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(emd_1d(&[-1.5], &[2.0]).unwrap(), 3.5);
        assert!((emd_1d(&[0.0], &[1.0, 1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dtw_examples() {
        assert_eq!(dtw_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap().raw, 0.0);
        assert_eq!(dtw_distance(&[0.0, 0.0, 1.0], &[0.0, 1.0, 1.0]).unwrap().raw, 0.0);
        let d = dtw_distance(&[0.0, 2.0], &[1.0]).unwrap();
        assert_eq!(d.raw, 2.0);
        assert!((d.normalized - 2.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn dtw_bounded_by_diagonal(v in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..40)) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let diag: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
            prop_assert!(dtw_distance(&a, &b).unwrap().raw <= diag + 1e-9);
        }

        #[test]
        fn distributional_metrics_ignore_order(mut a in proptest::collection::vec(-10.0f64..10.0, 1..30),
                                               b in proptest::collection::vec(-10.0f64..10.0, 1..30)) {
            let ks = ks_statistic(&a, &b).unwrap();
            let emd = emd_1d(&a, &b).unwrap();
            a.reverse();
            prop_assert_eq!(ks_statistic(&a, &b).unwrap(), ks);
            prop_assert!((emd_1d(&a, &b).unwrap() - emd).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ks));
        }
    }

    fn traj(id: &str, n: usize, offset: f64) -> SimulatedTrajectory {
        let steps = (0..n)
            .map(|k| {
                let t = k as f64;
                let a = math::sin(t / 5.0);
                let v = 5.0 + math::cos(t / 7.0);
                let x = 5.0 * t + math::sin(t / 3.0);
                SimStep {
                    t,
                    x_l: x + 20.0,
                    v_l: v,
                    x_obs: x,
                    v_obs: v,
                    a_obs: a,
                    x: x + offset,
                    v: v + offset,
                    a: a + offset,
                }
            })
            .collect();
        SimulatedTrajectory {
            segment_id: id.into(),
            model: "m".into(),
            bounds: AccelerationBounds::default(),
            dt: 1.0,
            collision: false,
            steps,
        }
    }

    #[test]
    fn perfect_model_scores_zero_everywhere() {
        let r = evaluate_model("m", &[traj("a", 60, 0.0), traj("b", 80, 0.0)], &MetricConfig::default()).unwrap();
        for q in Quantity::ALL {
            for m in Metric::ALL {
                let v = r.value(q, m).unwrap();
                if m == Metric::TheilC {
                    assert_eq!(v, 1.0);
                } else {
                    assert_eq!(v, 0.0, "{q} {m}");
                }
            }
        }
    }

    #[test]
    fn single_segment_aggregation_is_identity() {
        let t = traj("a", 60, 0.3);
        let r = evaluate_model("m", core::slice::from_ref(&t), &MetricConfig::default()).unwrap();
        let o = t.column(|s| s.x_obs);
        let s = t.column(|s| s.x);
        assert_eq!(r.value(Quantity::Position, Metric::Mae).unwrap(), mae(&o, &s).unwrap());
    }

    #[test]
    fn equal_durations_average() {
        let (a, b) = (traj("a", 61, 0.2), traj("b", 61, 0.6));
        let r = evaluate_model("m", &[a.clone(), b.clone()], &MetricConfig::default()).unwrap();
        let ra = evaluate_model("m", &[a], &MetricConfig::default()).unwrap();
        let rb = evaluate_model("m", &[b], &MetricConfig::default()).unwrap();
        for q in Quantity::ALL {
            for m in Metric::ALL {
                let expect = 0.5 * (ra.value(q, m).unwrap() + rb.value(q, m).unwrap());
                assert!((r.value(q, m).unwrap() - expect).abs() < 1e-9);
            }
        }
    }
}
