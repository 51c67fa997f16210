//! Backward dynamic programming on a quantization tree.
//!
//! Payoffs carry their own discount factor, so the recursions never discount.
//! Rows of the tree that no simulated path visited are treated as absorbing:
//! the node keeps its intrinsic value.

mod report;

use std::time::{Duration, Instant};

pub use report::{
    price_report, read_report_csv, write_report_csv, PriceReport, Problem, ReportRow,
};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::tree::QuantTree;

/// `E[f(X_{k+1}) | X_k = x_i]` for every node `i` of layer `k`, or `None`
/// where the row was never visited.
pub fn cond_expectation(tree: &QuantTree, k: usize, f: &[f64]) -> Result<Vec<Option<f64>>> {
    if k >= tree.steps() {
        return Err(Error::invalid(format!("no transition out of layer {k}")));
    }
    let layer = tree.transition(k);
    if f.len() != layer.to_len() {
        return Err(Error::DimensionMismatch {
            expected: layer.to_len(),
            got: f.len(),
        });
    }
    Ok((0..layer.from_len())
        .map(|i| row_dot(tree, k, i, f))
        .collect())
}

#[inline]
fn row_dot(tree: &QuantTree, k: usize, i: usize, f: &[f64]) -> Option<f64> {
    let layer = tree.transition(k);
    if !layer.is_visited(i) {
        return None;
    }
    let (cols, probs) = layer.row(i);
    Some(
        cols.iter()
            .zip(probs)
            .map(|(&j, &p)| p * f[j as usize])
            .sum(),
    )
}

fn payoff_tables(
    tree: &QuantTree,
    layers: usize,
    mut phi: impl FnMut(usize, &[f64]) -> f64,
) -> Vec<Vec<f64>> {
    (0..layers)
        .map(|k| {
            let g = tree.grid(k);
            (0..g.len()).map(|i| phi(k, g.point(i))).collect()
        })
        .collect()
}

fn check_tables(tree: &QuantTree, tables: &[Vec<f64>], layers: usize) -> Result<()> {
    if tables.len() != layers {
        return Err(Error::invalid(format!(
            "expected {layers} payoff layers, got {}",
            tables.len()
        )));
    }
    for (k, t) in tables.iter().enumerate() {
        if t.len() != tree.grid(k).len() {
            return Err(Error::DimensionMismatch {
                expected: tree.grid(k).len(),
                got: t.len(),
            });
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("payoff on layer {k} is not finite")));
        }
    }
    Ok(())
}

/// Optimal stopping with payoff `φ_k` on layers `0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingProblem {
    payoff: Vec<Vec<f64>>,
}

impl StoppingProblem {
    pub fn new(tree: &QuantTree, payoff: Vec<Vec<f64>>) -> Result<Self> {
        check_tables(tree, &payoff, tree.steps() + 1)?;
        Ok(Self { payoff })
    }

    /// Evaluates `phi(k, x)` at every grid point of every layer.
    pub fn from_fn(tree: &QuantTree, phi: impl FnMut(usize, &[f64]) -> f64) -> Result<Self> {
        Self::new(tree, payoff_tables(tree, tree.steps() + 1, phi))
    }

    pub fn payoff(&self, k: usize) -> &[f64] {
        &self.payoff[k]
    }
}

/// Swing contract: one unit may be taken on each of the layers `0..n`,
/// with total consumption in `[qmin, qmax]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwingProblem {
    payoff: Vec<Vec<f64>>,
    qmin: usize,
    qmax: usize,
}

impl SwingProblem {
    pub fn new(tree: &QuantTree, payoff: Vec<Vec<f64>>, qmin: usize, qmax: usize) -> Result<Self> {
        let n = tree.steps();
        if qmin > qmax {
            return Err(Error::invalid(format!("qmin {qmin} exceeds qmax {qmax}")));
        }
        if qmin > n {
            return Err(Error::invalid(format!(
                "qmin {qmin} cannot be met with {n} exercise dates"
            )));
        }
        check_tables(tree, &payoff, n)?;
        Ok(Self {
            payoff,
            qmin,
            qmax: qmax.min(n),
        })
    }

    /// Evaluates `v(k, x)` on the exercise layers `0..n`.
    pub fn from_fn(
        tree: &QuantTree,
        qmin: usize,
        qmax: usize,
        v: impl FnMut(usize, &[f64]) -> f64,
    ) -> Result<Self> {
        Self::new(tree, payoff_tables(tree, tree.steps(), v), qmin, qmax)
    }

    pub fn qmin(&self) -> usize {
        self.qmin
    }

    pub fn qmax(&self) -> usize {
        self.qmax
    }

    pub fn payoff(&self, k: usize) -> &[f64] {
        &self.payoff[k]
    }

    /// Consumption levels `m` (taken before layer `k`) that are reachable
    /// and can still meet `qmin`.
    pub fn window(&self, n: usize, k: usize) -> (usize, usize) {
        (self.qmin.saturating_sub(n - k), k.min(self.qmax))
    }

    /// Whether taking `x` at layer `k` with `m` already consumed keeps the
    /// constraints reachable.
    pub fn admissible(&self, n: usize, k: usize, m: usize, x: usize) -> bool {
        m + x <= self.qmax && m + x + (n - k - 1) >= self.qmin
    }

    /// Best total for a node frozen at payoff `v` with `m` consumed and
    /// `left` dates remaining, as `(value, units)`.
    fn absorbing(&self, v: f64, m: usize, left: usize) -> (f64, usize) {
        let lo = self.qmin.saturating_sub(m);
        let hi = (self.qmax - m).min(left);
        if v > 0.0 {
            (hi as f64 * v, hi)
        } else {
            (lo as f64 * v, lo)
        }
    }
}

/// Value and decision tables for one layer. Entry `(i, m)` sits at
/// `i * width + (m - m_lo)`; stopping problems use the single level `m = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueLayer {
    pub m_lo: usize,
    pub m_hi: usize,
    pub values: Vec<f64>,
    /// Stopping: 1 where exercising is optimal. Swing: units taken now.
    pub decisions: Vec<u8>,
}

impl ValueLayer {
    pub fn width(&self) -> usize {
        self.m_hi + 1 - self.m_lo
    }

    pub fn nodes(&self) -> usize {
        self.values.len() / self.width()
    }

    fn slot(&self, i: usize, m: usize) -> Option<usize> {
        (m >= self.m_lo && m <= self.m_hi && i < self.nodes())
            .then(|| i * self.width() + m - self.m_lo)
    }

    pub fn value(&self, i: usize, m: usize) -> Option<f64> {
        self.slot(i, m).map(|s| self.values[s])
    }

    pub fn decision(&self, i: usize, m: usize) -> Option<u8> {
        self.slot(i, m).map(|s| self.decisions[s])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BdpResult {
    pub price: f64,
    pub layers: Vec<ValueLayer>,
    pub wall: Duration,
}

impl BdpResult {
    /// Same result with the wall time replaced, for comparing runs.
    pub fn with_wall(mut self, wall: Duration) -> Self {
        self.wall = wall;
        self
    }

    pub fn value(&self, k: usize, i: usize, m: usize) -> Option<f64> {
        self.layers.get(k)?.value(i, m)
    }
}

/// Root value averaged over the root layer (a single node in practice).
fn root_price(tree: &QuantTree, layer: &ValueLayer, m: usize) -> f64 {
    let n0 = tree.grid(0).len();
    (0..n0)
        .map(|i| layer.value(i, m).unwrap_or(0.0))
        .sum::<f64>()
        / n0 as f64
}

pub fn solve_stopping(
    tree: &QuantTree,
    problem: &StoppingProblem,
    exec: Execution,
) -> Result<BdpResult> {
    check_tables(tree, &problem.payoff, tree.steps() + 1)?;
    let start = Instant::now();
    let n = tree.steps();
    let mut layers = Vec::with_capacity(n + 1);
    layers.push(ValueLayer {
        m_lo: 0,
        m_hi: 0,
        values: problem.payoff[n].clone(),
        decisions: vec![1; problem.payoff[n].len()],
    });
    for k in (0..n).rev() {
        let next = &layers.last().expect("terminal layer").values;
        let phi = &problem.payoff[k];
        let cells = exec.map_range(phi.len(), |i| match row_dot(tree, k, i, next) {
            Some(cont) if cont > phi[i] => (cont, 0u8),
            _ => (phi[i], 1u8),
        });
        let (values, decisions) = cells.into_iter().unzip();
        layers.push(ValueLayer {
            m_lo: 0,
            m_hi: 0,
            values,
            decisions,
        });
    }
    layers.reverse();
    let price = root_price(tree, &layers[0], 0);
    Ok(BdpResult {
        price,
        layers,
        wall: start.elapsed(),
    })
}

pub fn solve_swing(tree: &QuantTree, problem: &SwingProblem, exec: Execution) -> Result<BdpResult> {
    let n = tree.steps();
    if problem.qmin > n || problem.qmin > problem.qmax {
        return Err(Error::invalid(
            "swing constraints are infeasible at the root",
        ));
    }
    check_tables(tree, &problem.payoff, n)?;
    let start = Instant::now();
    let (lo, hi) = problem.window(n, n);
    let mut layers = Vec::with_capacity(n + 1);
    layers.push(ValueLayer {
        m_lo: lo,
        m_hi: hi,
        values: vec![0.0; tree.grid(n).len() * (hi + 1 - lo)],
        decisions: vec![0; tree.grid(n).len() * (hi + 1 - lo)],
    });
    for k in (0..n).rev() {
        let next = layers.last().expect("terminal layer");
        let (lo, hi) = problem.window(n, k);
        let width = hi + 1 - lo;
        // continuation per level of the next layer, as contiguous columns
        let columns: Vec<Vec<f64>> = (next.m_lo..=next.m_hi)
            .map(|m| {
                (0..next.nodes())
                    .map(|j| next.value(j, m).expect("level in window"))
                    .collect()
            })
            .collect();
        let v = &problem.payoff[k];
        let nodes = exec.map_range(v.len(), |i| {
            let mut out = Vec::with_capacity(width);
            let visited = tree.transition(k).is_visited(i);
            for m in lo..=hi {
                let mut best = (f64::NEG_INFINITY, 0u8);
                if !visited {
                    let (val, units) = problem.absorbing(v[i], m, n - k);
                    out.push((val, u8::from(units > 0)));
                    continue;
                }
                for x in 0..=1usize {
                    if !problem.admissible(n, k, m, x) {
                        continue;
                    }
                    let col = &columns[m + x - next.m_lo];
                    let cont = row_dot(tree, k, i, col).expect("visited row");
                    let val = x as f64 * v[i] + cont;
                    if val > best.0 {
                        best = (val, x as u8);
                    }
                }
                out.push(best);
            }
            out
        });
        let mut values = Vec::with_capacity(v.len() * width);
        let mut decisions = Vec::with_capacity(v.len() * width);
        for (val, d) in nodes.into_iter().flatten() {
            values.push(val);
            decisions.push(d);
        }
        layers.push(ValueLayer {
            m_lo: lo,
            m_hi: hi,
            values,
            decisions,
        });
    }
    layers.reverse();
    let price = root_price(tree, &layers[0], 0);
    Ok(BdpResult {
        price,
        layers,
        wall: start.elapsed(),
    })
}

/// Total consumption along every tree path under the optimal decisions,
/// as the set of `(layer, node, consumed)` states visited plus the range
/// of final totals. A path ending in an unvisited row is closed out with
/// its absorbing policy.
pub fn replay_swing(tree: &QuantTree, problem: &SwingProblem, result: &BdpResult) -> SwingReplay {
    let n = tree.steps();
    let mut bands = Vec::with_capacity(n);
    let mut totals: Option<(usize, usize)> = None;
    let widen = |r: &mut Option<(usize, usize)>, t: usize| {
        *r = Some(r.map_or((t, t), |(a, b)| (a.min(t), b.max(t))));
    };
    let mut frontier: Vec<(usize, usize)> = (0..tree.grid(0).len()).map(|i| (i, 0)).collect();
    for k in 0..n {
        let layer = &result.layers[k];
        let mut band: Option<(usize, usize)> = None;
        let mut next = vec![false; tree.grid(k + 1).len() * (problem.qmax + 1)];
        for &(i, m) in &frontier {
            let x = layer.decision(i, m).unwrap_or(0) as usize;
            let t = tree.transition(k);
            if !t.is_visited(i) {
                let (_, units) = problem.absorbing(problem.payoff[k][i], m, n - k);
                widen(&mut band, m + units.min(1));
                widen(&mut totals, m + units);
                continue;
            }
            widen(&mut band, m + x);
            for (&j, &p) in t.row(i).0.iter().zip(t.row(i).1) {
                if p > 0.0 {
                    next[j as usize * (problem.qmax + 1) + m + x] = true;
                }
            }
        }
        bands.push(band);
        frontier = next
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(s, _)| (s / (problem.qmax + 1), s % (problem.qmax + 1)))
            .collect();
    }
    for &(_, m) in &frontier {
        widen(&mut totals, m);
    }
    SwingReplay { bands, totals }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwingReplay {
    /// Per exercise layer, the range of cumulative consumption after the decision.
    pub bands: Vec<Option<(usize, usize)>>,
    /// Range of total consumption over all paths.
    pub totals: Option<(usize, usize)>,
}

/// Rough Monte Carlo error of the price: the sampling error of the first
/// conditional expectation, `sqrt(Var_π(V_1) / M)`.
pub fn std_hint(tree: &QuantTree, result: &BdpResult, m_after_root: usize) -> f64 {
    if tree.steps() == 0 || tree.samples() == 0 {
        return 0.0;
    }
    let layer = tree.transition(0);
    let Some(next) = result.layers.get(1) else {
        return 0.0;
    };
    let mut var = 0.0;
    for i in 0..layer.from_len() {
        let (cols, probs) = layer.row(i);
        let vals: Vec<f64> = cols
            .iter()
            .map(|&j| next.value(j as usize, m_after_root).unwrap_or(0.0))
            .collect();
        let mean: f64 = vals.iter().zip(probs).map(|(v, p)| v * p).sum();
        var += vals
            .iter()
            .zip(probs)
            .map(|(v, p)| p * (v - mean).powi(2))
            .sum::<f64>();
    }
    (var / layer.from_len() as f64 / tree.samples() as f64).sqrt()
}
