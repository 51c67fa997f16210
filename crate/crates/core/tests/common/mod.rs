//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use qtree::quant::QuantGrid;
use qtree::rng::{EngineKind, RngStream, StreamFactory};
use qtree::tree::QuantTree;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Bermudan put on a Cox-Ross-Rubinstein lattice with `steps` steps,
/// exercisable only on the `dates` equally spaced dates (and at time 0).
pub fn crr_bermudan_put(
    s0: f64,
    strike: f64,
    r: f64,
    sigma: f64,
    horizon: f64,
    steps: usize,
    dates: usize,
) -> f64 {
    assert_eq!(
        steps % dates,
        0,
        "exercise dates must fall on lattice steps"
    );
    let dt = horizon / steps as f64;
    let u = (sigma * dt.sqrt()).exp();
    let d = 1.0 / u;
    let disc = (-r * dt).exp();
    let p = ((r * dt).exp() - d) / (u - d);
    let stride = steps / dates;
    let spot = |n: usize, up: usize| s0 * u.powi(up as i32) * d.powi((n - up) as i32);
    let mut v: Vec<f64> = (0..=steps)
        .map(|j| (strike - spot(steps, j)).max(0.0))
        .collect();
    for n in (0..steps).rev() {
        for j in 0..=n {
            v[j] = disc * (p * v[j + 1] + (1.0 - p) * v[j]);
            if n % stride == 0 {
                v[j] = v[j].max(strike - spot(n, j));
            }
        }
    }
    v[0]
}

/// Cells of a sorted 1-d grid as `(lower, upper)` midpoint bounds.
pub fn cells_1d(points: &[f64]) -> Vec<(f64, f64)> {
    (0..points.len())
        .map(|i| {
            let lo = if i == 0 {
                f64::NEG_INFINITY
            } else {
                0.5 * (points[i - 1] + points[i])
            };
            let hi = if i + 1 == points.len() {
                f64::INFINITY
            } else {
                0.5 * (points[i] + points[i + 1])
            };
            (lo, hi)
        })
        .collect()
}

/// `P(X in a, X + sqrt(dt) Z in b)` for `X ~ N(0, var)`, by Simpson
/// quadrature of the normal density against the normal CDF.
pub fn gaussian_rectangle(var: f64, dt: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let n = std_normal();
    let sd = var.sqrt();
    let lo = a.0.max(-12.0 * sd);
    let hi = a.1.min(12.0 * sd);
    if lo >= hi {
        return 0.0;
    }
    let inner = |x: f64| {
        let dens = (-0.5 * x * x / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        let s = dt.sqrt();
        dens * (n.cdf((b.1 - x) / s) - n.cdf((b.0 - x) / s))
    };
    let steps = 20_000;
    let h = (hi - lo) / steps as f64;
    let mut acc = inner(lo) + inner(hi);
    for i in 1..steps {
        acc += inner(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

pub fn line_grid(n: usize) -> QuantGrid {
    QuantGrid::new(1, (0..n).map(|i| i as f64).collect()).unwrap()
}

pub fn uniforms(seed: u64) -> RngStream {
    StreamFactory::new(EngineKind::Mrg32k3a, seed).serial()
}

/// Tree with a single root and `n` nodes per layer, random dense rows.
pub fn random_tree(seed: u64, steps: usize, n: usize) -> QuantTree {
    let mut s = uniforms(seed);
    let mut grids = vec![line_grid(1)];
    grids.extend((0..steps).map(|_| line_grid(n)));
    let mats: Vec<Vec<Vec<f64>>> = (0..steps)
        .map(|k| {
            (0..grids[k].len())
                .map(|_| {
                    let w: Vec<f64> = (0..n).map(|_| s.next_f64() + 0.05).collect();
                    let total: f64 = w.iter().sum();
                    w.into_iter().map(|v| v / total).collect()
                })
                .collect()
        })
        .collect();
    QuantTree::from_dense(grids, &mats).unwrap()
}

/// Payoffs of either sign on every node of layers `0..layers`.
pub fn random_payoffs(tree: &QuantTree, layers: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut s = uniforms(seed ^ 0xABCD);
    (0..layers)
        .map(|k| {
            (0..tree.grid(k).len())
                .map(|_| 3.0 * s.next_f64() - 1.0)
                .collect()
        })
        .collect()
}

/// Swing value by brute force over the whole history tree: every node of
/// every path tries both choices and the total is checked only at maturity.
pub fn swing_exhaustive(tree: &QuantTree, v: &[Vec<f64>], qmin: usize, qmax: usize) -> f64 {
    fn go(
        tree: &QuantTree,
        v: &[Vec<f64>],
        k: usize,
        i: usize,
        m: usize,
        q: (usize, usize),
    ) -> f64 {
        if k == v.len() {
            return if (q.0..=q.1).contains(&m) {
                0.0
            } else {
                f64::NEG_INFINITY
            };
        }
        let (cols, probs) = tree.transition(k).row(i);
        let mut best = f64::NEG_INFINITY;
        for x in 0..=1 {
            let cont: f64 = cols
                .iter()
                .zip(probs)
                .map(|(&j, &p)| p * go(tree, v, k + 1, j as usize, m + x, q))
                .sum();
            best = best.max(x as f64 * v[k][i] + cont);
        }
        best
    }
    go(tree, v, 0, 0, 0, (qmin, qmax))
}
