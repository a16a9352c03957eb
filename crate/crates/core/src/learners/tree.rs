//! Regression trees with exact greedy splits over presorted features.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const N_FEATURES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(f64),
    Split {
        feature: u8,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn constant(v: f64) -> Self {
        Self { nodes: vec![Node::Leaf(v)] }
    }

    pub fn predict(&self, x: &[f64; N_FEATURES]) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(t, left as usize).max(go(t, right as usize)),
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// Split and leaf rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// Squared error; leaf = mean.
    Variance,
    /// Squared-error gradients with L1 leaf shrinkage `alpha`; leaf =
    /// `soft(sum, alpha) / n`.
    L1Gradient { alpha: f64 },
}

impl Criterion {
    fn score(&self, sum: f64, n: f64) -> f64 {
        match *self {
            Criterion::Variance => sum * sum / n,
            Criterion::L1Gradient { alpha } => {
                let s = soft_threshold(sum, alpha);
                s * s / n
            }
        }
    }

    fn leaf(&self, sum: f64, n: f64) -> f64 {
        match *self {
            Criterion::Variance => sum / n,
            Criterion::L1Gradient { alpha } => soft_threshold(sum, alpha) / n,
        }
    }
}

pub fn soft_threshold(x: f64, alpha: f64) -> f64 {
    if x > alpha {
        x - alpha
    } else if x < -alpha {
        x + alpha
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features examined per split, `1..=N_FEATURES`.
    pub max_features: usize,
}

struct Builder<'a, R> {
    x: &'a [[f64; N_FEATURES]],
    y: &'a [f64],
    p: TreeParams,
    rng: Option<&'a mut R>,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
}

/// Fits a tree on the multiset of `rows` (duplicates allowed, as in a
/// bootstrap sample). `rng` is only consulted when `max_features <
/// N_FEATURES`.
pub fn fit_tree<R: Rng>(
    x: &[[f64; N_FEATURES]],
    y: &[f64],
    rows: &[u32],
    params: TreeParams,
    rng: Option<&mut R>,
) -> Tree {
    let orders: [Vec<u32>; N_FEATURES] = core::array::from_fn(|f| {
        let mut o = rows.to_vec();
        o.sort_by(|&a, &b| x[a as usize][f].total_cmp(&x[b as usize][f]).then(a.cmp(&b)));
        o
    });
    let mut b = Builder {
        x,
        y,
        p: params,
        rng,
        nodes: Vec::new(),
        goes_left: vec![false; x.len()],
    };
    b.grow(orders, 0);
    Tree { nodes: b.nodes }
}

impl<R: Rng> Builder<'_, R> {
    fn grow(&mut self, orders: [Vec<u32>; N_FEATURES], depth: usize) -> u32 {
        let rows = &orders[0];
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&r| self.y[r as usize]).sum();
        let id = self.nodes.len() as u32;
        let leaf = Node::Leaf(self.p.criterion.leaf(sum, n as f64));
        self.nodes.push(leaf);

        let first = self.y[rows[0] as usize];
        let pure = rows.iter().all(|&r| self.y[r as usize] == first);
        if depth >= self.p.max_depth || n < self.p.min_samples_split.max(2) || pure {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&orders, sum) else {
            return id;
        };

        for &r in rows {
            self.goes_left[r as usize] = self.x[r as usize][feature] <= threshold;
        }
        let mut left: [Vec<u32>; N_FEATURES] = Default::default();
        let mut right: [Vec<u32>; N_FEATURES] = Default::default();
        for f in 0..N_FEATURES {
            for &r in &orders[f] {
                if self.goes_left[r as usize] {
                    left[f].push(r);
                } else {
                    right[f].push(r);
                }
            }
        }
        drop(orders);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id as usize] = Node::Split {
            feature: feature as u8,
            threshold,
            left: l,
            right: r,
        };
        id
    }

    fn best_split(&mut self, orders: &[Vec<u32>; N_FEATURES], sum: f64) -> Option<(usize, f64)> {
        let n = orders[0].len();
        let mut features: [usize; N_FEATURES] = core::array::from_fn(|f| f);
        let k = self.p.max_features.clamp(1, N_FEATURES);
        if k < N_FEATURES {
            if let Some(rng) = self.rng.as_deref_mut() {
                features.shuffle(rng);
            }
        }
        let parent = self.p.criterion.score(sum, n as f64);
        let min_leaf = self.p.min_samples_leaf.max(1);
        let mut best: Option<(f64, usize, f64)> = None;
        for &f in &features[..k] {
            let order = &orders[f];
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                let r = order[i] as usize;
                left_sum += self.y[r];
                let nl = i + 1;
                if nl < min_leaf || n - nl < min_leaf {
                    continue;
                }
                let (xv, xn) = (self.x[r][f], self.x[order[i + 1] as usize][f]);
                if xv >= xn {
                    continue;
                }
                let gain = self.p.criterion.score(left_sum, nl as f64)
                    + self.p.criterion.score(sum - left_sum, (n - nl) as f64)
                    - parent;
                if best.map_or(true, |(g, _, _)| gain > g) {
                    let mut thr = 0.5 * (xv + xn);
                    // midpoint can round up to xn for adjacent floats
                    if thr >= xn {
                        thr = xv;
                    }
                    best = Some((gain, f, thr));
                }
            }
        }
        let (gain, f, thr) = best?;
        (gain > 1e-12 * (1.0 + parent.abs())).then_some((f, thr))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn params() -> TreeParams {
        TreeParams {
            criterion: Criterion::Variance,
            max_depth: 10,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: N_FEATURES,
        }
    }

    #[test]
    fn step_function_is_one_split() {
        let x: Vec<[f64; 4]> = (0..20).map(|i| [0.0, i as f64, 0.0, 0.0]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i < 8 { -1.0 } else { 2.0 }).collect();
        let rows: Vec<u32> = (0..20).collect();
        let t = fit_tree::<ChaCha8Rng>(&x, &y, &rows, params(), None);
        assert_eq!(t.depth(), 1);
        assert_eq!(t.predict(&[0.0, 7.0, 0.0, 0.0]), -1.0);
        assert_eq!(t.predict(&[0.0, 8.0, 0.0, 0.0]), 2.0);
        assert_eq!(t.predict(&[0.0, 7.5, 0.0, 0.0]), -1.0);
    }

    #[test]
    fn constant_target_is_a_leaf() {
        let x: Vec<[f64; 4]> = (0..10).map(|i| [i as f64; 4]).collect();
        let rows: Vec<u32> = (0..10).collect();
        let t = fit_tree::<ChaCha8Rng>(&x, &[3.0; 10], &rows, params(), None);
        assert_eq!(t.nodes, vec![Node::Leaf(3.0)]);
    }

    #[test]
    fn min_leaf_and_depth_are_respected() {
        let x: Vec<[f64; 4]> = (0..64).map(|i| [i as f64, 0.0, 0.0, 0.0]).collect();
        let y: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64).collect();
        let rows: Vec<u32> = (0..64).collect();
        let p = TreeParams {
            max_depth: 3,
            min_samples_leaf: 5,
            ..params()
        };
        let t = fit_tree::<ChaCha8Rng>(&x, &y, &rows, p, None);
        assert!(t.depth() <= 3);
        // every leaf holds at least 5 rows
        let mut counts = vec![0usize; t.nodes.len()];
        for xi in &x {
            let mut i = 0;
            while let Node::Split { feature, threshold, left, right } = t.nodes[i] {
                i = if xi[feature as usize] <= threshold { left } else { right } as usize;
            }
            counts[i] += 1;
        }
        for (i, n) in t.nodes.iter().enumerate() {
            if matches!(n, Node::Leaf(_)) {
                assert!(counts[i] >= 5);
            }
        }
    }

    #[test]
    fn l1_leaf_shrinks_toward_zero() {
        let x: Vec<[f64; 4]> = (0..4).map(|_| [0.0; 4]).collect();
        let rows: Vec<u32> = (0..4).collect();
        let p = TreeParams {
            criterion: Criterion::L1Gradient { alpha: 2.0 },
            ..params()
        };
        let t = fit_tree::<ChaCha8Rng>(&x, &[1.0, 1.0, 1.0, 2.0], &rows, p, None);
        assert_eq!(t.nodes, vec![Node::Leaf((5.0 - 2.0) / 4.0)]);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-1.5, 1.0), -0.5);
    }
}
