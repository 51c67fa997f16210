//! Quantization grids and nearest-neighbour projection onto them.

mod io;
mod kdtree;
mod lloyd;

use std::fmt;
use std::str::FromStr;

pub use io::{load_grid, parse_grid, save_grid, write_grid};
pub use kdtree::{KdTree, LEAF_SIZE};
pub use lloyd::{
    distortion, lloyd_build, lloyd_step, Distortion, GaussianSampler, LloydOutcome, Sampler,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NnBackend {
    BruteForce,
    #[default]
    KdTree,
}

impl fmt::Display for NnBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NnBackend::BruteForce => "brute",
            NnBackend::KdTree => "kdtree",
        })
    }
}

impl FromStr for NnBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "brute" | "bruteforce" | "brute-force" => Ok(NnBackend::BruteForce),
            "kdtree" | "kd-tree" => Ok(NnBackend::KdTree),
            other => Err(Error::invalid(format!(
                "unknown nearest-neighbour backend `{other}`"
            ))),
        }
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Codebook of `N` distinct finite points in `R^d`, stored row-major, with a
/// kd-tree built at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantGrid {
    dim: usize,
    points: Vec<f64>,
    kdtree: KdTree,
}

impl QuantGrid {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("grid dimension must be positive"));
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "grid needs a positive multiple of {dim} coordinates, got {}",
                points.len()
            )));
        }
        if points.len() / dim > u32::MAX as usize {
            return Err(Error::invalid("grid too large"));
        }
        if let Some(v) = points.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "grid contains non-finite value {v}"
            )));
        }
        let n = points.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        let row = |i: usize| &points[i * dim..(i + 1) * dim];
        order.sort_unstable_by(|&a, &b| {
            row(a)
                .iter()
                .zip(row(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        if let Some(w) = order.windows(2).find(|w| row(w[0]) == row(w[1])) {
            return Err(Error::invalid(format!(
                "grid points {} and {} coincide",
                w[0].min(w[1]),
                w[0].max(w[1])
            )));
        }
        let kdtree = KdTree::build(dim, &points);
        Ok(Self {
            dim,
            points,
            kdtree,
        })
    }

    pub fn singleton(point: Vec<f64>) -> Result<Self> {
        Self::new(point.len(), point)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("grid rows have differing lengths"));
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn kdtree(&self) -> &KdTree {
        &self.kdtree
    }

    /// Index of the closest point; ties go to the smallest index.
    pub fn nearest(&self, query: &[f64], backend: NnBackend) -> Result<usize> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("query must be finite"));
        }
        Ok(self.nearest_unchecked(query, backend))
    }

    /// [`nearest`](Self::nearest) without validating the query.
    #[inline]
    pub fn nearest_unchecked(&self, query: &[f64], backend: NnBackend) -> usize {
        match backend {
            NnBackend::BruteForce => self.nearest_brute(query),
            NnBackend::KdTree => self.kdtree.nearest(query),
        }
    }

    #[inline]
    fn nearest_brute(&self, q: &[f64]) -> usize {
        let mut best = f64::INFINITY;
        let mut arg = 0;
        match self.dim {
            1 => {
                for (i, p) in self.points.iter().enumerate() {
                    let d = (q[0] - p) * (q[0] - p);
                    if d < best {
                        best = d;
                        arg = i;
                    }
                }
            }
            2 => {
                for (i, p) in self.points.chunks_exact(2).enumerate() {
                    let d = (q[0] - p[0]) * (q[0] - p[0]) + (q[1] - p[1]) * (q[1] - p[1]);
                    if d < best {
                        best = d;
                        arg = i;
                    }
                }
            }
            d => {
                for (i, p) in self.points.chunks_exact(d).enumerate() {
                    let dist = sq_dist(q, p);
                    if dist < best {
                        best = dist;
                        arg = i;
                    }
                }
            }
        }
        arg
    }

    /// Image of the grid under `x -> L x` for a row-major `d x d` matrix.
    pub fn linear_map(&self, matrix: &[f64]) -> Result<QuantGrid> {
        let d = self.dim;
        if matrix.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: matrix.len(),
            });
        }
        let mut out = vec![0.0; self.points.len()];
        for (src, dst) in self.points.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            for (r, o) in dst.iter_mut().enumerate() {
                *o = (0..d).map(|c| matrix[r * d + c] * src[c]).sum();
            }
        }
        QuantGrid::new(d, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo_points(n: usize, dim: usize, seed: u64) -> Vec<f64> {
        let mut s = crate::rng::StreamFactory::new(crate::rng::EngineKind::Mrg32k3a, seed).serial();
        (0..n * dim).map(|_| s.next_f64() * 2.0 - 1.0).collect()
    }

    #[test]
    fn two_point_grid_queries() {
        let g = QuantGrid::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        for b in [NnBackend::BruteForce, NnBackend::KdTree] {
            assert_eq!(g.nearest(&[0.1, 0.0], b).unwrap(), 0);
            assert_eq!(g.nearest(&[0.5, 0.0], b).unwrap(), 0);
            assert_eq!(g.nearest(&[0.6, 0.0], b).unwrap(), 1);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let g = QuantGrid::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            g.nearest(&[0.0], NnBackend::BruteForce),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
        assert!(g.nearest(&[f64::NAN, 0.0], NnBackend::KdTree).is_err());
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(QuantGrid::new(2, vec![]).is_err());
        assert!(QuantGrid::new(2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(QuantGrid::new(1, vec![1.0, f64::INFINITY]).is_err());
        assert!(QuantGrid::new(2, vec![1.0, 2.0, 0.0, 0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn singleton_tree_returns_zero() {
        let g = QuantGrid::singleton(vec![3.0, -1.0]).unwrap();
        assert_eq!(g.kdtree().leaf_count(), 1);
        assert_eq!(g.nearest(&[100.0, 100.0], NnBackend::KdTree).unwrap(), 0);
    }

    #[test]
    fn collinear_points_split_on_first_axis() {
        let pts: Vec<f64> = (0..100).flat_map(|i| [i as f64 * 0.37, 0.0]).collect();
        let g = QuantGrid::new(2, pts).unwrap();
        let dims = g.kdtree().split_dims();
        assert!(!dims.is_empty());
        assert!(dims.iter().all(|&d| d == 0));
    }

    #[test]
    fn tree_is_balanced() {
        let g = QuantGrid::new(2, pseudo_points(500, 2, 1)).unwrap();
        // 500 points, leaves of at most 8: ceil(log2(500 / 8)) + 1 levels
        assert!(g.kdtree().depth() <= 8, "depth {}", g.kdtree().depth());
    }

    #[test]
    fn kdtree_matches_brute_force() {
        let g = QuantGrid::new(2, pseudo_points(500, 2, 2)).unwrap();
        let q = pseudo_points(10_000, 2, 3);
        for p in q.chunks_exact(2) {
            let p = [p[0] * 1.3, p[1] * 1.3];
            assert_eq!(
                g.nearest_unchecked(&p, NnBackend::KdTree),
                g.nearest_unchecked(&p, NnBackend::BruteForce)
            );
        }
    }

    #[test]
    fn lattice_ties_resolve_to_smallest_index() {
        // integer lattice queried at cell corners: up to four equidistant points
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                pts.extend_from_slice(&[i as f64, j as f64]);
            }
        }
        let g = QuantGrid::new(2, pts).unwrap();
        for i in 0..19 {
            for j in 0..19 {
                for q in [[i as f64 + 0.5, j as f64 + 0.5], [i as f64 + 0.5, j as f64]] {
                    assert_eq!(
                        g.nearest_unchecked(&q, NnBackend::KdTree),
                        g.nearest_unchecked(&q, NnBackend::BruteForce),
                        "{q:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn three_dimensional_backends_agree() {
        let g = QuantGrid::new(3, pseudo_points(300, 3, 5)).unwrap();
        for q in pseudo_points(3000, 3, 6).chunks_exact(3) {
            assert_eq!(
                g.nearest_unchecked(q, NnBackend::KdTree),
                g.nearest_unchecked(q, NnBackend::BruteForce)
            );
        }
    }

    #[test]
    fn linear_map_transforms_points() {
        let g = QuantGrid::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let m = g.linear_map(&[2.0, 0.0, 1.0, 3.0]).unwrap();
        assert_eq!(m.point(0), &[2.0, 1.0]);
        assert_eq!(m.point(1), &[0.0, 3.0]);
    }
}
