//! Quantization trees: per-layer grids plus Monte Carlo estimates of the
//! transition probabilities between their Voronoi cells.
//!
//! Transition `k` maps layer `k` to layer `k + 1`, `k = 0..n`. Counts and
//! probabilities are stored row-major in compressed sparse rows: for small
//! time steps each cell only reaches a handful of neighbours, and dense
//! storage at `N = 500, n = 365` would need gigabytes.

mod counts;
mod estimate;
mod io;

use std::fmt;
use std::str::FromStr;

pub use counts::{LayerCounts, PairCounter};
pub use estimate::{
    count_unsynchronized, estimate_alg1, estimate_alg2, estimate_alg3, layer_grids,
    marginal_sampler, Estimate, PathStreams, PhaseTimings, DEFAULT_CHUNK_PATHS,
};
pub use io::{load_tree, read_tree, save_tree, write_tree, TREE_MAGIC, TREE_VERSION};

use crate::error::{Error, Result};
use crate::quant::QuantGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    /// Serial path simulation.
    AlgI,
    /// Pathwise-parallel simulation with private counters and a merge.
    AlgII,
    /// Layer-parallel resimulation from the exact marginals.
    AlgIII,
}

impl EstimatorKind {
    pub fn code(self) -> u32 {
        match self {
            EstimatorKind::AlgI => 1,
            EstimatorKind::AlgII => 2,
            EstimatorKind::AlgIII => 3,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            1 => Ok(EstimatorKind::AlgI),
            2 => Ok(EstimatorKind::AlgII),
            3 => Ok(EstimatorKind::AlgIII),
            other => Err(Error::invalid(format!(
                "unknown algorithm {other}, expected 1, 2 or 3"
            ))),
        }
    }

    /// Whether every layer is reached by all `M` simulated paths.
    pub fn pathwise(self) -> bool {
        !matches!(self, EstimatorKind::AlgIII)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let digits = s.trim_start_matches("alg").trim_start_matches("orithm");
        match digits {
            "1" | "i" => Ok(EstimatorKind::AlgI),
            "2" | "ii" => Ok(EstimatorKind::AlgII),
            "3" | "iii" => Ok(EstimatorKind::AlgIII),
            _ => Err(Error::invalid(format!("unknown algorithm `{s}`"))),
        }
    }
}

/// Counts and normalized probabilities for one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionLayer {
    counts: LayerCounts,
    probs: Vec<f64>,
}

impl TransitionLayer {
    /// Normalizes each visited row by its count; unvisited rows stay empty.
    pub fn normalize(counts: LayerCounts) -> Self {
        let mut probs = vec![0.0; counts.nnz()];
        for i in 0..counts.from_len() {
            let total = counts.row_count(i);
            if total == 0 {
                continue;
            }
            let range = counts.row_range(i);
            for e in range {
                probs[e] = counts.entry_count(e) as f64 / total as f64;
            }
        }
        Self { counts, probs }
    }

    pub(crate) fn from_parts(counts: LayerCounts, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != counts.nnz() {
            return Err(Error::format("probability array does not match counts"));
        }
        Ok(Self { counts, probs })
    }

    pub fn counts(&self) -> &LayerCounts {
        &self.counts
    }

    pub fn from_len(&self) -> usize {
        self.counts.from_len()
    }

    pub fn to_len(&self) -> usize {
        self.counts.to_len()
    }

    pub fn is_visited(&self, i: usize) -> bool {
        self.counts.row_count(i) > 0
    }

    /// Nonzero columns of row `i` and their probabilities.
    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.counts.row_range(i);
        (&self.counts.cols()[r.clone()], &self.probs[r])
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        let (cols, probs) = self.row(i);
        cols.binary_search(&(j as u32)).map_or(0.0, |e| probs[e])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Row `i` as a dense vector.
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.to_len()];
        let (cols, probs) = self.row(i);
        for (&j, &p) in cols.iter().zip(probs) {
            out[j as usize] = p;
        }
        out
    }

    /// Largest `|sum_j p_ij - 1|` over visited rows.
    pub fn max_row_deviation(&self) -> f64 {
        (0..self.from_len())
            .filter(|&i| self.is_visited(i))
            .map(|i| (self.row(i).1.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn unvisited_rows(&self) -> Vec<usize> {
        (0..self.from_len())
            .filter(|&i| !self.is_visited(i))
            .collect()
    }
}

/// Grids `Γ_0..Γ_n` and the estimated transitions between consecutive layers.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantTree {
    grids: Vec<QuantGrid>,
    layers: Vec<TransitionLayer>,
    samples: u64,
    estimator: EstimatorKind,
}

impl QuantTree {
    pub fn new(
        grids: Vec<QuantGrid>,
        layers: Vec<TransitionLayer>,
        samples: u64,
        estimator: EstimatorKind,
    ) -> Result<Self> {
        if grids.len() != layers.len() + 1 {
            return Err(Error::invalid(format!(
                "{} grids cannot carry {} transitions",
                grids.len(),
                layers.len()
            )));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.from_len() != grids[k].len() || layer.to_len() != grids[k + 1].len() {
                return Err(Error::invalid(format!(
                    "transition {k} does not match its grids"
                )));
            }
        }
        Ok(Self {
            grids,
            layers,
            samples,
            estimator,
        })
    }

    /// Builds a tree directly from dense row-stochastic matrices, with each
    /// row count set to `weight`. Meant for exact small instances.
    pub fn from_dense(grids: Vec<QuantGrid>, matrices: &[Vec<Vec<f64>>]) -> Result<Self> {
        let mut layers = Vec::with_capacity(matrices.len());
        for m in matrices {
            let from = m.len();
            let to = m.first().map_or(0, Vec::len);
            let mut row_ptr = vec![0usize];
            let mut cols = Vec::new();
            let mut probs = Vec::new();
            let mut row_counts = Vec::with_capacity(from);
            for row in m {
                if row.len() != to {
                    return Err(Error::invalid("ragged transition matrix"));
                }
                for (j, &p) in row.iter().enumerate() {
                    if !(p.is_finite() && p >= 0.0) {
                        return Err(Error::invalid(
                            "transition probabilities must be non-negative",
                        ));
                    }
                    if p > 0.0 {
                        cols.push(j as u32);
                        probs.push(p);
                    }
                }
                row_counts.push(u64::from(row.iter().any(|&p| p > 0.0)));
                row_ptr.push(cols.len());
            }
            let counts = LayerCounts::from_csr(
                from,
                to,
                row_ptr,
                cols.clone(),
                vec![1; cols.len()],
                row_counts,
            )?;
            layers.push(TransitionLayer::from_parts(counts, probs)?);
        }
        Self::new(grids, layers, 1, EstimatorKind::AlgI)
    }

    pub fn steps(&self) -> usize {
        self.layers.len()
    }

    pub fn grids(&self) -> &[QuantGrid] {
        &self.grids
    }

    pub fn grid(&self, k: usize) -> &QuantGrid {
        &self.grids[k]
    }

    pub fn layers(&self) -> &[TransitionLayer] {
        &self.layers
    }

    pub fn transition(&self, k: usize) -> &TransitionLayer {
        &self.layers[k]
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn estimator(&self) -> EstimatorKind {
        self.estimator
    }

    /// Distribution over the cells of each layer, propagated from the root.
    pub fn layer_marginals(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.grids.len());
        let root = self.grids[0].len();
        out.push(vec![1.0 / root as f64; root]);
        for layer in &self.layers {
            let prev = out.last().expect("root pushed");
            let mut next = vec![0.0; layer.to_len()];
            for (i, &mass) in prev.iter().enumerate() {
                let (cols, probs) = layer.row(i);
                for (&j, &p) in cols.iter().zip(probs) {
                    next[j as usize] += mass * p;
                }
            }
            out.push(next);
        }
        out
    }

    /// Checks that every transition carries exactly `samples` counts.
    pub fn check_mass(&self) -> Result<()> {
        for (k, layer) in self.layers.iter().enumerate() {
            let total = layer.counts().total();
            if total != self.samples {
                return Err(Error::Numeric(format!(
                    "transition {k} holds {total} counts, expected {}",
                    self.samples
                )));
            }
        }
        Ok(())
    }

    pub fn max_row_deviation(&self) -> f64 {
        self.layers
            .iter()
            .map(TransitionLayer::max_row_deviation)
            .fold(0.0, f64::max)
    }
}
