//! Fully connected ReLU network with a linear output, trained by Adam.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tree::N_FEATURES;
use super::LearnerError;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FnnHyperparameters {
    pub n_layers: usize,
    pub units_per_layer: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for FnnHyperparameters {
    fn default() -> Self {
        Self {
            n_layers: 4,
            units_per_layer: 41,
            dropout: 0.0723,
            learning_rate: 0.0127,
            batch_size: 32,
            epochs: 20,
        }
    }
}

impl FnnHyperparameters {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::InvalidHyperparameters(m.into()));
        if self.n_layers == 0 || self.units_per_layer == 0 || self.batch_size == 0 {
            return bad("n_layers, units_per_layer and batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out × n_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    /// He-normal weights, zero biases.
    pub fn init(n_in: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut sizes = vec![n_in];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, math::sqrt(2.0 / w[0] as f64)).expect("positive std");
                Layer {
                    n_in: w[0],
                    n_out: w[1],
                    weights: (0..w[0] * w[1]).map(|_| normal.sample(rng)).collect(),
                    bias: vec![0.0; w[1]],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All weights then biases, layer by layer.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut i = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[i..i + nw]);
            i += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&p[i..i + nb]);
            i += nb;
        }
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            a = affine(l, &a);
            if li < last {
                relu(&mut a);
            }
        }
        a[0]
    }

    /// Mean squared error over `(x, y)` and its gradient in [`Self::params`]
    /// order. `masks[i][layer]` multiplies hidden activations (inverted
    /// dropout); pass `None` for deterministic evaluation.
    pub fn loss_and_gradient(&self, xs: &[Vec<f64>], ys: &[f64], masks: Option<&[Vec<Vec<f64>>]>) -> (f64, Vec<f64>) {
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> =
            self.layers.iter().map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()])).collect();
        let n = ys.len() as f64;
        let last = self.layers.len() - 1;
        let mut loss = 0.0;
        for (i, (x, y)) in xs.iter().zip(ys).enumerate() {
            // forward, keeping each layer's input and pre-activation
            let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
            let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
            let mut a = x.clone();
            for (li, l) in self.layers.iter().enumerate() {
                let z = affine(l, &a);
                inputs.push(a);
                a = z.clone();
                pre.push(z);
                if li < last {
                    relu(&mut a);
                    if let Some(m) = masks {
                        for (v, k) in a.iter_mut().zip(&m[i][li]) {
                            *v *= k;
                        }
                    }
                }
            }
            let err = a[0] - y;
            loss += err * err / n;
            // backward
            let mut delta = vec![2.0 * err / n];
            for li in (0..self.layers.len()).rev() {
                let l = &self.layers[li];
                let (gw, gb) = &mut grads[li];
                for o in 0..l.n_out {
                    gb[o] += delta[o];
                    for j in 0..l.n_in {
                        gw[o * l.n_in + j] += delta[o] * inputs[li][j];
                    }
                }
                if li == 0 {
                    break;
                }
                let mut prev = vec![0.0; l.n_in];
                for o in 0..l.n_out {
                    for (j, p) in prev.iter_mut().enumerate() {
                        *p += l.weights[o * l.n_in + j] * delta[o];
                    }
                }
                for (j, p) in prev.iter_mut().enumerate() {
                    if pre[li - 1][j] <= 0.0 {
                        *p = 0.0;
                    } else if let Some(m) = masks {
                        *p *= m[i][li - 1][j];
                    }
                }
                delta = prev;
            }
        }
        let mut flat = Vec::with_capacity(self.n_params());
        for (gw, gb) in grads {
            flat.extend(gw);
            flat.extend(gb);
        }
        (loss, flat)
    }
}

fn affine(l: &Layer, a: &[f64]) -> Vec<f64> {
    (0..l.n_out)
        .map(|o| l.bias[o] + l.weights[o * l.n_in..(o + 1) * l.n_in].iter().zip(a).map(|(w, x)| w * x).sum::<f64>())
        .collect()
}

fn relu(a: &mut [f64]) {
    for v in a {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Largest relative discrepancy between the analytic gradient and central
/// finite differences with step `h`; `|g − fd| / max(|g| + |fd|, 1e-8)`.
pub fn gradient_check(net: &Network, xs: &[Vec<f64>], ys: &[f64], h: f64) -> f64 {
    let (_, g) = net.loss_and_gradient(xs, ys, None);
    let p0 = net.params();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..p0.len() {
        let mut p = p0.clone();
        p[i] = p0[i] + h;
        probe.set_params(&p);
        let up = probe.loss_and_gradient(xs, ys, None).0;
        p[i] = p0[i] - h;
        probe.set_params(&p);
        let down = probe.loss_and_gradient(xs, ys, None).0;
        let fd = (up - down) / (2.0 * h);
        let rel = math::abs(g[i] - fd) / (math::abs(g[i]) + math::abs(fd)).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, p: &mut [f64], g: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - math::powf(Self::B1, self.t as f64);
        let c2 = 1.0 - math::powf(Self::B2, self.t as f64);
        for i in 0..p.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g[i] * g[i];
            p[i] -= self.lr * (self.m[i] / c1) / (math::sqrt(self.v[i] / c2) + Self::EPS);
        }
    }
}

/// Trains on standardized inputs and targets; returns the network and the
/// mean training batch loss per epoch.
pub(crate) fn fit(
    x: &[[f64; N_FEATURES]],
    y: &[f64],
    hp: &FnnHyperparameters,
    seed: u64,
) -> Result<(Network, Vec<f64>), LearnerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = vec![hp.units_per_layer; hp.n_layers];
    let mut net = Network::init(N_FEATURES, &hidden, &mut rng);
    let mut params = net.params();
    let mut adam = Adam::new(params.len(), hp.learning_rate);
    let keep = 1.0 - hp.dropout;
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut curve = Vec::with_capacity(hp.epochs);
    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(hp.batch_size) {
            let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| x[i].to_vec()).collect();
            let ys: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
            let masks: Option<Vec<Vec<Vec<f64>>>> = (hp.dropout > 0.0).then(|| {
                chunk
                    .iter()
                    .map(|_| {
                        hidden
                            .iter()
                            .map(|&u| {
                                (0..u)
                                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            });
            let (loss, g) = net.loss_and_gradient(&xs, &ys, masks.as_deref());
            if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(LearnerError::Divergence { epoch, loss });
            }
            adam.step(&mut params, &g);
            net.set_params(&params);
            total += loss;
            batches += 1;
        }
        let mean = total / batches.max(1) as f64;
        if !mean.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(LearnerError::Divergence { epoch, loss: mean });
        }
        curve.push(mean);
    }
    Ok((net, curve))
}
