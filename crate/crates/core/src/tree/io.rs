//! Binary tree files.
//!
//! Little-endian throughout: magic `QTRE`, version, `n`, `M`, estimator
//! code, the root grid, then for each transition the destination grid
//! followed by its sparse counts and probabilities. Grids are embedded in the
//! text grid format with a `u64` byte-length prefix.

use std::fs;
use std::path::Path;

use super::{EstimatorKind, LayerCounts, QuantTree, TransitionLayer};
use crate::error::{Error, Result};
use crate::quant::{parse_grid, write_grid, QuantGrid};

pub const TREE_MAGIC: [u8; 4] = *b"QTRE";
pub const TREE_VERSION: u32 = 1;

pub fn write_tree(tree: &QuantTree) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&TREE_MAGIC);
    out.extend_from_slice(&TREE_VERSION.to_le_bytes());
    put_u64(&mut out, tree.steps() as u64);
    put_u64(&mut out, tree.samples());
    out.extend_from_slice(&tree.estimator().code().to_le_bytes());
    put_grid(&mut out, tree.grid(0));
    for (k, layer) in tree.layers().iter().enumerate() {
        put_grid(&mut out, tree.grid(k + 1));
        let c = layer.counts();
        put_u64(&mut out, c.from_len() as u64);
        put_u64(&mut out, c.to_len() as u64);
        for &r in c.row_counts() {
            put_u64(&mut out, r);
        }
        put_u64(&mut out, c.nnz() as u64);
        for &p in c.row_ptr() {
            put_u64(&mut out, p as u64);
        }
        for &j in c.cols() {
            out.extend_from_slice(&j.to_le_bytes());
        }
        for &v in c.entry_counts() {
            put_u64(&mut out, v);
        }
        for &p in layer.probs() {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    out
}

pub fn read_tree(bytes: &[u8]) -> Result<QuantTree> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != TREE_MAGIC {
        return Err(Error::format("not a tree file (bad magic)"));
    }
    let version = r.u32()?;
    if version != TREE_VERSION {
        return Err(Error::format(format!(
            "unsupported tree file version {version}, expected {TREE_VERSION}"
        )));
    }
    let steps = r.len()?;
    let samples = r.u64()?;
    let estimator = EstimatorKind::from_code(r.u32()?).map_err(|e| Error::format(e.to_string()))?;
    let mut grids = vec![r.grid()?];
    let mut layers = Vec::with_capacity(steps.min(1 << 16));
    for _ in 0..steps {
        grids.push(r.grid()?);
        let from = r.len()?;
        let to = r.len()?;
        let row_counts = (0..from).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let nnz = r.len()?;
        let row_ptr = (0..=from).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let cols = (0..nnz).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let counts = (0..nnz).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let probs = (0..nnz)
            .map(|_| r.u64().map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;
        let counts = LayerCounts::from_csr(from, to, row_ptr, cols, counts, row_counts)?;
        layers.push(TransitionLayer::from_parts(counts, probs)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::format("trailing bytes after tree data"));
    }
    QuantTree::new(grids, layers, samples, estimator).map_err(|e| Error::format(e.to_string()))
}

pub fn save_tree(tree: &QuantTree, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), write_tree(tree)).map_err(Error::at_path(path.as_ref()))?;
    Ok(())
}

pub fn load_tree(path: impl AsRef<Path>) -> Result<QuantTree> {
    read_tree(&fs::read(path.as_ref()).map_err(Error::at_path(path.as_ref()))?)
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_grid(out: &mut Vec<u8>, grid: &QuantGrid) {
    let text = write_grid(grid);
    put_u64(out, text.len() as u64);
    out.extend_from_slice(text.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format("tree file is truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    /// A length field, bounded by the bytes left so corrupt headers cannot
    /// trigger huge allocations.
    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        if v > (self.buf.len() - self.pos) as u64 * 8 + 1 {
            return Err(Error::format("tree file is truncated"));
        }
        Ok(v as usize)
    }

    fn grid(&mut self) -> Result<QuantGrid> {
        let n = self.len()?;
        let text = std::str::from_utf8(self.take(n)?)
            .map_err(|_| Error::format("embedded grid is not text"))?;
        parse_grid(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> QuantTree {
        let g0 = QuantGrid::singleton(vec![0.0]).unwrap();
        let g1 = QuantGrid::new(1, vec![-0.1, 1.0 / 3.0]).unwrap();
        let mut c = crate::tree::PairCounter::new(1, 2);
        c.increment(0, 0);
        c.increment(0, 1);
        c.increment(0, 1);
        let layer = TransitionLayer::normalize(c.finish());
        QuantTree::new(vec![g0, g1], vec![layer], 3, EstimatorKind::AlgII).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let t = tiny();
        let bytes = write_tree(&t);
        let back = read_tree(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(write_tree(&back), bytes);
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = write_tree(&tiny());
        bytes[0] = b'X';
        assert!(matches!(read_tree(&bytes), Err(Error::Format(_))));
        let mut bytes = write_tree(&tiny());
        bytes[4] = 9;
        assert!(matches!(read_tree(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn every_truncation_fails() {
        let bytes = write_tree(&tiny());
        for cut in 0..bytes.len() {
            assert!(read_tree(&bytes[..cut]).is_err(), "cut at {cut}");
        }
    }
}
