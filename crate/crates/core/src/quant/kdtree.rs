//! Balanced kd-tree for exact nearest-neighbour queries on a fixed codebook.

use super::sq_dist;

/// Points per leaf.
pub const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        dim: u32,
        value: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdTree {
    dim: usize,
    nodes: Vec<Node>,
    /// Points stored in leaf order.
    points: Vec<f64>,
    /// Original codebook index of each leaf-ordered point.
    ids: Vec<u32>,
}

impl KdTree {
    /// Splits on the coordinate of widest spread, at the median.
    pub fn build(dim: usize, points: &[f64]) -> Self {
        let n = points.len() / dim;
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut tree = KdTree {
            dim,
            nodes: Vec::with_capacity(2 * n / LEAF_SIZE + 1),
            points: Vec::with_capacity(points.len()),
            ids: Vec::with_capacity(n),
        };
        tree.build_node(points, &mut order);
        tree
    }

    fn build_node(&mut self, src: &[f64], idx: &mut [u32]) -> u32 {
        let d = self.dim;
        let slot = self.nodes.len() as u32;
        if idx.len() <= LEAF_SIZE {
            let start = self.ids.len() as u32;
            for &i in idx.iter() {
                self.ids.push(i);
                self.points
                    .extend_from_slice(&src[i as usize * d..(i as usize + 1) * d]);
            }
            self.nodes.push(Node::Leaf {
                start,
                end: self.ids.len() as u32,
            });
            return slot;
        }

        let mut split_dim = 0;
        let mut widest = f64::NEG_INFINITY;
        for k in 0..d {
            let (lo, hi) = idx
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = src[i as usize * d + k];
                    (lo.min(v), hi.max(v))
                });
            if hi - lo > widest {
                widest = hi - lo;
                split_dim = k;
            }
        }
        idx.sort_unstable_by(|&a, &b| {
            src[a as usize * d + split_dim]
                .total_cmp(&src[b as usize * d + split_dim])
                .then(a.cmp(&b))
        });
        let mid = idx.len() / 2;
        let value = src[idx[mid] as usize * d + split_dim];

        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let (lo, hi) = idx.split_at_mut(mid);
        let left = self.build_node(src, lo);
        let right = self.build_node(src, hi);
        self.nodes[slot as usize] = Node::Split {
            dim: split_dim as u32,
            value,
            left,
            right,
        };
        slot
    }

    /// Nearest codebook index; equal distances resolve to the smallest index.
    #[inline]
    pub fn nearest(&self, query: &[f64]) -> usize {
        let mut best = (f64::INFINITY, u32::MAX);
        let mut small = [0.0f64; 8];
        if self.dim <= small.len() {
            self.search(0, query, 0.0, &mut small[..self.dim], &mut best);
        } else {
            self.search(0, query, 0.0, &mut vec![0.0; self.dim], &mut best);
        }
        best.1 as usize
    }

    /// `rd` is the squared distance from `q` to the node's cell, built up
    /// from the per-dimension offsets in `off`.
    fn search(&self, node: u32, q: &[f64], rd: f64, off: &mut [f64], best: &mut (f64, u32)) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                let d = self.dim;
                let pts = &self.points[start as usize * d..end as usize * d];
                let ids = &self.ids[start as usize..end as usize];
                let mut consider = |dist: f64, id: u32| {
                    if dist < best.0 || (dist == best.0 && id < best.1) {
                        *best = (dist, id);
                    }
                };
                match d {
                    1 => {
                        for (&p, &id) in pts.iter().zip(ids) {
                            consider((q[0] - p) * (q[0] - p), id);
                        }
                    }
                    2 => {
                        let (q0, q1) = (q[0], q[1]);
                        for (p, &id) in pts.chunks_exact(2).zip(ids) {
                            consider((q0 - p[0]) * (q0 - p[0]) + (q1 - p[1]) * (q1 - p[1]), id);
                        }
                    }
                    _ => {
                        for (p, &id) in pts.chunks_exact(d).zip(ids) {
                            consider(sq_dist(q, p), id);
                        }
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let dim = dim as usize;
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, rd, off, best);
                let old = off[dim];
                let far_rd = rd - old * old + diff * diff;
                // non-strict so that equidistant points with smaller index are still found
                if far_rd <= best.0 {
                    off[dim] = diff;
                    self.search(far, q, far_rd, off, best);
                    off[dim] = old;
                }
            }
        }
    }

    /// Split dimensions in construction order.
    pub fn split_dims(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { dim, .. } => Some(*dim as usize),
                Node::Leaf { .. } => None,
            })
            .collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &KdTree, node: u32) -> usize {
            match t.nodes[node as usize] {
                Node::Leaf { .. } => 1,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}
