use std::collections::HashMap;

use crate::error::{Error, Result};

/// Integer joint counts `p_ij` in compressed sparse rows, with row totals `p_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCounts {
    from_len: usize,
    to_len: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    counts: Vec<u64>,
    row_counts: Vec<u64>,
}

impl LayerCounts {
    pub fn from_csr(
        from_len: usize,
        to_len: usize,
        row_ptr: Vec<usize>,
        cols: Vec<u32>,
        counts: Vec<u64>,
        row_counts: Vec<u64>,
    ) -> Result<Self> {
        let ok = row_ptr.len() == from_len + 1
            && row_ptr.first() == Some(&0)
            && row_ptr.last() == Some(&cols.len())
            && row_ptr.windows(2).all(|w| w[0] <= w[1])
            && cols.len() == counts.len()
            && row_counts.len() == from_len
            && cols.iter().all(|&j| (j as usize) < to_len)
            && (0..from_len).all(|i| {
                cols[row_ptr[i]..row_ptr[i + 1]]
                    .windows(2)
                    .all(|w| w[0] < w[1])
            });
        if !ok {
            return Err(Error::format("inconsistent sparse count layout"));
        }
        Ok(Self {
            from_len,
            to_len,
            row_ptr,
            cols,
            counts,
            row_counts,
        })
    }

    /// Builds counts from `(i, j)` keys encoded as `i * to_len + j`, sorted.
    fn from_sorted_keys(
        from_len: usize,
        to_len: usize,
        keys: &[(u64, u64)],
        row_counts: Vec<u64>,
    ) -> Self {
        let mut row_ptr = vec![0usize; from_len + 1];
        let mut cols = Vec::with_capacity(keys.len());
        let mut counts = Vec::with_capacity(keys.len());
        for &(key, c) in keys {
            let i = (key / to_len as u64) as usize;
            row_ptr[i + 1] += 1;
            cols.push((key % to_len as u64) as u32);
            counts.push(c);
        }
        for i in 0..from_len {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            from_len,
            to_len,
            row_ptr,
            cols,
            counts,
            row_counts,
        }
    }

    pub fn from_len(&self) -> usize {
        self.from_len
    }

    pub fn to_len(&self) -> usize {
        self.to_len
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn cols(&self) -> &[u32] {
        &self.cols
    }

    pub fn entry_counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn row_counts(&self) -> &[u64] {
        &self.row_counts
    }

    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    #[inline]
    pub fn entry_count(&self, e: usize) -> u64 {
        self.counts[e]
    }

    pub fn row_count(&self, i: usize) -> u64 {
        self.row_counts[i]
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        let r = self.row_range(i);
        self.cols[r.clone()]
            .binary_search(&(j as u32))
            .map_or(0, |e| self.counts[r.start + e])
    }

    /// `sum_ij p_ij`.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Elementwise sum of two count sets over the same shape.
    pub fn merge(&self, other: &LayerCounts) -> Result<LayerCounts> {
        if self.from_len != other.from_len || self.to_len != other.to_len {
            return Err(Error::invalid("cannot merge counts of different shapes"));
        }
        let mut acc = PairCounter::new(self.from_len, self.to_len);
        for src in [self, other] {
            for i in 0..src.from_len {
                for e in src.row_range(i) {
                    acc.add(i, src.cols[e] as usize, src.counts[e]);
                }
                acc.add_row_only(i, 0);
            }
        }
        let mut merged = acc.finish();
        for i in 0..self.from_len {
            merged.row_counts[i] = self.row_counts[i] + other.row_counts[i];
        }
        Ok(merged)
    }
}

/// Accumulates `(i, j)` transition counts for one layer.
///
/// Small layers use a dense scratch array with a list of touched cells;
/// large ones fall back to a hash map. Either way the result is sorted.
#[derive(Debug, Clone)]
pub struct PairCounter {
    from_len: usize,
    to_len: usize,
    store: Store,
    row_counts: Vec<u64>,
}

#[derive(Debug, Clone)]
enum Store {
    Dense { cells: Vec<u64>, touched: Vec<u64> },
    Sparse(HashMap<u64, u64>),
}

const DENSE_LIMIT: usize = 1 << 22;

impl PairCounter {
    pub fn new(from_len: usize, to_len: usize) -> Self {
        let cells = from_len.saturating_mul(to_len);
        let store = if cells <= DENSE_LIMIT {
            Store::Dense {
                cells: vec![0; cells],
                touched: Vec::new(),
            }
        } else {
            Store::Sparse(HashMap::new())
        };
        Self {
            from_len,
            to_len,
            store,
            row_counts: vec![0; from_len],
        }
    }

    /// Hash-map backed counter, for layers too large for a dense scratch.
    pub fn sparse(from_len: usize, to_len: usize) -> Self {
        Self {
            from_len,
            to_len,
            store: Store::Sparse(HashMap::new()),
            row_counts: vec![0; from_len],
        }
    }

    /// Records one transition: `p_ij += 1` and `p_i += 1`.
    #[inline]
    pub fn increment(&mut self, i: usize, j: usize) {
        self.add(i, j, 1);
        self.row_counts[i] += 1;
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, c: u64) {
        let key = (i * self.to_len + j) as u64;
        match &mut self.store {
            Store::Dense { cells, touched } => {
                let cell = &mut cells[key as usize];
                if *cell == 0 {
                    touched.push(key);
                }
                *cell += c;
            }
            Store::Sparse(map) => *map.entry(key).or_insert(0) += c,
        }
    }

    fn add_row_only(&mut self, i: usize, c: u64) {
        self.row_counts[i] += c;
    }

    pub fn finish(self) -> LayerCounts {
        let keys: Vec<(u64, u64)> = match self.store {
            Store::Dense { cells, mut touched } => {
                touched.sort_unstable();
                touched
                    .into_iter()
                    .map(|k| (k, cells[k as usize]))
                    .collect()
            }
            Store::Sparse(map) => {
                let mut v: Vec<(u64, u64)> = map.into_iter().collect();
                v.sort_unstable();
                v
            }
        };
        LayerCounts::from_sorted_keys(self.from_len, self.to_len, &keys, self.row_counts)
    }
}
