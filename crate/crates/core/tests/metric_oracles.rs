//! Distance metrics checked against brute-force reference implementations.

use cfbench_core::metrics::{dtw_distance, emd_1d, ks_statistic};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Optimal assignment over all permutations (equal sample counts).
fn emd_by_assignment(a: &[f64], b: &[f64]) -> f64 {
    permutations(a.len())
        .into_iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| (a[i] - b[j]).abs()).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        / a.len() as f64
}

/// Transportation problem with masses 1/n and 1/m solved by successive
/// shortest paths on integer capacities (scaled by n·m).
fn emd_by_min_cost_flow(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let supply_each = m as i64;
    let demand_each = n as i64;
    let total = (n * m) as i64;
    // nodes: 0 source, 1..=n left, n+1..=n+m right, n+m+1 sink
    let nodes = n + m + 2;
    let sink = n + m + 1;
    struct Edge {
        to: usize,
        cap: i64,
        cost: f64,
    }
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let add = |edges: &mut Vec<Edge>, adj: &mut Vec<Vec<usize>>, u: usize, v: usize, cap: i64, cost: f64| {
        adj[u].push(edges.len());
        edges.push(Edge { to: v, cap, cost });
        adj[v].push(edges.len());
        edges.push(Edge { to: u, cap: 0, cost: -cost });
    };
    for i in 0..n {
        add(&mut edges, &mut adj, 0, 1 + i, supply_each, 0.0);
        for j in 0..m {
            add(&mut edges, &mut adj, 1 + i, 1 + n + j, total, (a[i] - b[j]).abs());
        }
    }
    for j in 0..m {
        add(&mut edges, &mut adj, 1 + n + j, sink, demand_each, 0.0);
    }
    let mut flow = 0;
    let mut cost = 0.0;
    while flow < total {
        // Bellman-Ford shortest path
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev: Vec<Option<usize>> = vec![None; nodes];
        dist[0] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u].is_infinite() {
                    continue;
                }
                for &e in &adj[u] {
                    let ed = &edges[e];
                    if ed.cap > 0 && dist[u] + ed.cost < dist[ed.to] - 1e-12 {
                        dist[ed.to] = dist[u] + ed.cost;
                        prev[ed.to] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut push = total - flow;
        let mut v = sink;
        while let Some(e) = prev[v] {
            push = push.min(edges[e].cap);
            v = edges[e ^ 1].to;
        }
        let mut v = sink;
        while let Some(e) = prev[v] {
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            v = edges[e ^ 1].to;
        }
        flow += push;
        cost += push as f64 * dist[sink];
    }
    cost / total as f64
}

fn dtw_recursive(a: &[f64], b: &[f64]) -> f64 {
    fn go(a: &[f64], b: &[f64], i: usize, j: usize, memo: &mut HashMap<(usize, usize), f64>) -> f64 {
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let c = (a[i] - b[j]).abs();
        let v = if i == 0 && j == 0 {
            c
        } else if i == 0 {
            c + go(a, b, 0, j - 1, memo)
        } else if j == 0 {
            c + go(a, b, i - 1, 0, memo)
        } else {
            c + go(a, b, i - 1, j - 1, memo)
                .min(go(a, b, i - 1, j, memo))
                .min(go(a, b, i, j - 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, a.len() - 1, b.len() - 1, &mut HashMap::new())
}

fn ks_by_grid(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |s: &[f64], x: f64| s.iter().filter(|v| **v <= x).count() as f64 / s.len() as f64;
    a.iter()
        .chain(b)
        .map(|&x| (cdf(a, x) - cdf(b, x)).abs())
        .fold(0.0, f64::max)
}

fn sample(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // coarse values so ties occur
    (0..n).map(|_| (rng.random_range(-20..20) as f64) * 0.25).collect()
}

#[test]
fn emd_matches_optimal_assignment() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.random_range(1..=7);
        let (a, b) = (sample(&mut rng, n), sample(&mut rng, n));
        let want = emd_by_assignment(&a, &b);
        let got = emd_1d(&a, &b).unwrap();
        assert!((got - want).abs() < 1e-9, "{a:?} {b:?}: {got} vs {want}");
    }
}

#[test]
fn emd_matches_min_cost_flow_for_unequal_sizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=6);
        let (a, b) = (sample(&mut rng, n), sample(&mut rng, m));
        let want = emd_by_min_cost_flow(&a, &b);
        let got = emd_1d(&a, &b).unwrap();
        assert!((got - want).abs() < 1e-9, "{a:?} {b:?}: {got} vs {want}");
    }
}

#[test]
fn dtw_matches_recursive_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let n = rng.random_range(1..=12);
        let m = rng.random_range(1..=12);
        let (a, b) = (sample(&mut rng, n), sample(&mut rng, m));
        let want = dtw_recursive(&a, &b);
        let got = dtw_distance(&a, &b).unwrap();
        assert!((got.raw - want).abs() < 1e-9);
        assert!((got.normalized - want / (n + m) as f64).abs() < 1e-12);
    }
}

#[test]
fn ks_matches_grid_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let n = rng.random_range(1..=15);
        let m = rng.random_range(1..=15);
        let (a, b) = (sample(&mut rng, n), sample(&mut rng, m));
        assert!((ks_statistic(&a, &b).unwrap() - ks_by_grid(&a, &b)).abs() < 1e-12);
    }
}
