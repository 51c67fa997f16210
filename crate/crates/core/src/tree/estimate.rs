//! Monte Carlo estimators of the transition counts.
//!
//! All three estimators draw their randomness from [`PathStreams`], which
//! cuts the generator's sequence into fixed blocks of paths (chunks). The
//! chunking never depends on the number of workers, and counts are merged by
//! integer addition, so results are identical for every schedule.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::time::{Duration, Instant};

use super::counts::PairCounter;
use super::{EstimatorKind, QuantTree, TransitionLayer};
use crate::error::{Error, Result};
use crate::model::Ar1Spec;
use crate::par::Execution;
use crate::quant::{GaussianSampler, NnBackend, QuantGrid};
use crate::rng::{PartitionMode, RngStream, StreamFactory, StreamPartition};

pub const DEFAULT_CHUNK_PATHS: usize = 256;

/// Layer count above which the serial estimator keeps sparse counters.
const SERIAL_DENSE_CELLS: usize = 1 << 24;

/// Per-phase wall-clock times of one estimation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub simulate: Duration,
    pub nearest: Duration,
    pub merge: Duration,
    pub normalize: Duration,
    pub total: Duration,
}

/// Estimated tree plus its phase timings.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub tree: QuantTree,
    pub timings: PhaseTimings,
}

/// Assigns each block of `chunk_paths` consecutive paths its own stream.
///
/// Chunk `c` is block `c` of the serial sequence, so for the LCG and
/// MRG32k3a the chunks laid end to end are exactly the serial stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStreams {
    factory: StreamFactory,
    chunk_paths: usize,
}

impl PathStreams {
    pub fn new(factory: StreamFactory, chunk_paths: usize) -> Result<Self> {
        if chunk_paths == 0 {
            return Err(Error::invalid("chunk size must be positive"));
        }
        Ok(Self {
            factory,
            chunk_paths,
        })
    }

    pub fn with_default_chunks(factory: StreamFactory) -> Self {
        Self {
            factory,
            chunk_paths: DEFAULT_CHUNK_PATHS,
        }
    }

    pub fn factory(&self) -> &StreamFactory {
        &self.factory
    }

    pub fn chunk_paths(&self) -> usize {
        self.chunk_paths
    }

    pub fn chunk_count(&self, paths: usize) -> usize {
        paths.div_ceil(self.chunk_paths)
    }

    /// Uniforms per path: normals come in Box-Muller pairs and every path
    /// starts on a fresh pair.
    pub fn uniforms_per_path(normals: usize) -> u64 {
        2 * normals.div_ceil(2) as u64
    }

    fn chunk_stream(
        &self,
        chunk: usize,
        chunks: usize,
        normals_per_path: usize,
    ) -> Result<RngStream> {
        let block_len = self.chunk_paths as u64 * Self::uniforms_per_path(normals_per_path);
        self.factory.stream(StreamPartition::new(
            PartitionMode::Block { block_len },
            chunks as u64,
            chunk as u64,
        )?)
    }
}

fn validate(spec: &Ar1Spec, grids: &[QuantGrid], samples: usize) -> Result<()> {
    if samples == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    if grids.len() != spec.steps() + 1 {
        return Err(Error::invalid(format!(
            "expected {} grids for a {}-step chain, got {}",
            spec.steps() + 1,
            spec.steps(),
            grids.len()
        )));
    }
    if let Some(g) = grids.iter().find(|g| g.dim() != spec.dim()) {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: g.dim(),
        });
    }
    Ok(())
}

fn root_index(spec: &Ar1Spec, grids: &[QuantGrid], backend: NnBackend) -> usize {
    grids[0].nearest_unchecked(&vec![0.0; spec.dim()], backend)
}

/// Simulates one path from the origin into `states` (`n * d`, layers `1..=n`).
#[inline]
fn simulate_path(spec: &Ar1Spec, stream: &mut RngStream, states: &mut [f64]) {
    let d = spec.dim();
    let mut eps = [0.0f64; 8];
    let mut x = [0.0f64; 8];
    stream.discard_spare();
    for (k, out) in states.chunks_exact_mut(d).enumerate() {
        stream.fill_gaussian(&mut eps[..d]);
        spec.advance(k, &x[..d], &eps[..d], out);
        x[..d].copy_from_slice(out);
    }
}

fn check_small_dim(spec: &Ar1Spec) -> Result<()> {
    if spec.dim() > 8 {
        return Err(Error::invalid("state dimension above 8 is not supported"));
    }
    Ok(())
}

fn finish(
    grids: &[QuantGrid],
    counters: Vec<super::LayerCounts>,
    samples: usize,
    kind: EstimatorKind,
) -> Result<(QuantTree, Duration)> {
    let t = Instant::now();
    let layers = counters
        .into_iter()
        .map(TransitionLayer::normalize)
        .collect();
    let tree = QuantTree::new(grids.to_vec(), layers, samples as u64, kind)?;
    Ok((tree, t.elapsed()))
}

/// Serial estimator: simulate each path through all layers, project onto
/// each grid and count the transitions.
pub fn estimate_alg1(
    spec: &Ar1Spec,
    grids: &[QuantGrid],
    samples: usize,
    stream: &mut RngStream,
    backend: NnBackend,
) -> Result<Estimate> {
    validate(spec, grids, samples)?;
    check_small_dim(spec)?;
    let start = Instant::now();
    let (n, d) = (spec.steps(), spec.dim());
    let dense: usize = (0..n).map(|k| grids[k].len() * grids[k + 1].len()).sum();
    let mut counters: Vec<PairCounter> = (0..n)
        .map(|k| {
            if dense <= SERIAL_DENSE_CELLS {
                PairCounter::new(grids[k].len(), grids[k + 1].len())
            } else {
                PairCounter::sparse(grids[k].len(), grids[k + 1].len())
            }
        })
        .collect();
    let root = root_index(spec, grids, backend);
    let mut states = vec![0.0; n * d];
    let (mut sim, mut nn) = (Duration::ZERO, Duration::ZERO);
    for _ in 0..samples {
        let t0 = Instant::now();
        simulate_path(spec, stream, &mut states);
        let t1 = Instant::now();
        let mut i = root;
        for (k, x) in states.chunks_exact(d).enumerate() {
            let j = grids[k + 1].nearest_unchecked(x, backend);
            counters[k].increment(i, j);
            i = j;
        }
        sim += t1 - t0;
        nn += t1.elapsed();
    }
    let t = Instant::now();
    let counts: Vec<_> = counters.into_iter().map(PairCounter::finish).collect();
    let merge = t.elapsed();
    let (tree, normalize) = finish(grids, counts, samples, EstimatorKind::AlgI)?;
    Ok(Estimate {
        tree,
        timings: PhaseTimings {
            simulate: sim,
            nearest: nn,
            merge,
            normalize,
            total: start.elapsed(),
        },
    })
}

/// Pathwise-parallel estimator. Each chunk of paths is simulated by one
/// worker into its own slice of the cell-index table; after the barrier the
/// table is counted layer by layer.
pub fn estimate_alg2(
    spec: &Ar1Spec,
    grids: &[QuantGrid],
    samples: usize,
    streams: &PathStreams,
    exec: Execution,
    backend: NnBackend,
) -> Result<Estimate> {
    validate(spec, grids, samples)?;
    check_small_dim(spec)?;
    let start = Instant::now();
    let (n, d) = (spec.steps(), spec.dim());
    let chunks = streams.chunk_count(samples);
    let chunk_paths = streams.chunk_paths();
    let normals = n * d;
    // streams are built up front so that errors surface before any work
    let chunk_streams: Vec<RngStream> = (0..chunks)
        .map(|c| streams.chunk_stream(c, chunks, normals))
        .collect::<Result<_>>()?;

    let mut cells = vec![0u32; samples * n];
    let sim_ns = AtomicU64::new(0);
    let nn_ns = AtomicU64::new(0);
    exec.for_each_chunk_mut(&mut cells, chunk_paths * n, |c, out| {
        let mut stream = chunk_streams[c].clone();
        let paths = out.len() / n;
        let mut states = vec![0.0; paths * n * d];
        let t0 = Instant::now();
        for path in states.chunks_exact_mut(n * d) {
            simulate_path(spec, &mut stream, path);
        }
        let t1 = Instant::now();
        for (p, row) in out.chunks_exact_mut(n).enumerate() {
            let path = &states[p * n * d..(p + 1) * n * d];
            for (k, (x, cell)) in path.chunks_exact(d).zip(row.iter_mut()).enumerate() {
                *cell = grids[k + 1].nearest_unchecked(x, backend) as u32;
            }
        }
        sim_ns.fetch_add((t1 - t0).as_nanos() as u64, Ordering::Relaxed);
        nn_ns.fetch_add(t1.elapsed().as_nanos() as u64, Ordering::Relaxed);
    });
    let phase1 = start.elapsed();

    let t = Instant::now();
    let root = root_index(spec, grids, backend);
    let counts = exec.map_range(n, |k| {
        let mut counter = PairCounter::new(grids[k].len(), grids[k + 1].len());
        for row in cells.chunks_exact(n) {
            let i = if k == 0 { root } else { row[k - 1] as usize };
            counter.increment(i, row[k] as usize);
        }
        counter.finish()
    });
    let merge = t.elapsed();
    drop(cells);
    let (tree, normalize) = finish(grids, counts, samples, EstimatorKind::AlgII)?;

    let (sim, nn) = split_wall(phase1, sim_ns.into_inner(), nn_ns.into_inner());
    Ok(Estimate {
        tree,
        timings: PhaseTimings {
            simulate: sim,
            nearest: nn,
            merge,
            normalize,
            total: start.elapsed(),
        },
    })
}

/// Splits a parallel phase's wall time in proportion to per-worker CPU time.
fn split_wall(wall: Duration, a_ns: u64, b_ns: u64) -> (Duration, Duration) {
    let sum = (a_ns + b_ns).max(1) as f64;
    let a = wall.mul_f64(a_ns as f64 / sum);
    (a, wall.saturating_sub(a))
}

/// Layer-parallel estimator. For every transition `k` it samples `X_k`
/// directly from its marginal law, advances it one step and counts the
/// pair of cells; layers only touch their own two grids.
pub fn estimate_alg3(
    spec: &Ar1Spec,
    grids: &[QuantGrid],
    samples: usize,
    streams: &PathStreams,
    exec: Execution,
    backend: NnBackend,
) -> Result<Estimate> {
    validate(spec, grids, samples)?;
    check_small_dim(spec)?;
    let start = Instant::now();
    let (n, d) = (spec.steps(), spec.dim());
    let per_sample = PathStreams::uniforms_per_path(2 * d);
    let layer_streams: Vec<RngStream> = (0..n)
        .map(|k| {
            streams.factory().stream(StreamPartition::new(
                PartitionMode::Block {
                    block_len: samples as u64 * per_sample,
                },
                n as u64,
                k as u64,
            )?)
        })
        .collect::<Result<_>>()?;

    let sim_ns = AtomicU64::new(0);
    let nn_ns = AtomicU64::new(0);
    let counts = exec.map_range(n, |k| {
        let mut stream = layer_streams[k].clone();
        let (from, to) = (&grids[k], &grids[k + 1]);
        let mut counter = PairCounter::new(from.len(), to.len());
        let mut z = [0.0f64; 8];
        let mut eps = [0.0f64; 8];
        let mut xk = [0.0f64; 8];
        let mut xn = [0.0f64; 8];
        let (mut sim, mut nn) = (0u64, 0u64);
        // time in batches to keep clock reads off the inner loop
        const BATCH: usize = 1024;
        let mut pending: Vec<(usize, usize)> = Vec::with_capacity(BATCH);
        let mut pairs = vec![0.0f64; BATCH * 2 * d];
        let mut done = 0;
        while done < samples {
            let m = BATCH.min(samples - done);
            let t0 = Instant::now();
            for pair in pairs.chunks_exact_mut(2 * d).take(m) {
                stream.discard_spare();
                stream.fill_gaussian(&mut z[..d]);
                stream.fill_gaussian(&mut eps[..d]);
                spec.marginal_from_normals(k, &z[..d], &mut xk[..d]);
                spec.advance(k, &xk[..d], &eps[..d], &mut xn[..d]);
                pair[..d].copy_from_slice(&xk[..d]);
                pair[d..].copy_from_slice(&xn[..d]);
            }
            let t1 = Instant::now();
            pending.clear();
            for pair in pairs.chunks_exact(2 * d).take(m) {
                let i = from.nearest_unchecked(&pair[..d], backend);
                let j = to.nearest_unchecked(&pair[d..], backend);
                pending.push((i, j));
            }
            for &(i, j) in &pending {
                counter.increment(i, j);
            }
            sim += (t1 - t0).as_nanos() as u64;
            nn += t1.elapsed().as_nanos() as u64;
            done += m;
        }
        sim_ns.fetch_add(sim, Ordering::Relaxed);
        nn_ns.fetch_add(nn, Ordering::Relaxed);
        counter.finish()
    });
    let phase1 = start.elapsed();
    let (tree, normalize) = finish(grids, counts, samples, EstimatorKind::AlgIII)?;
    let (sim, nn) = split_wall(phase1, sim_ns.into_inner(), nn_ns.into_inner());
    Ok(Estimate {
        tree,
        timings: PhaseTimings {
            simulate: sim,
            nearest: nn,
            merge: Duration::ZERO,
            normalize,
            total: start.elapsed(),
        },
    })
}

/// Exact law of `X_k`: centred Gaussian with the layer-`k` marginal covariance.
pub fn marginal_sampler(spec: &Ar1Spec, k: usize) -> Result<GaussianSampler> {
    if k > spec.steps() {
        return Err(Error::invalid(format!(
            "layer {k} out of range for a {}-step chain",
            spec.steps()
        )));
    }
    GaussianSampler::with_factor(spec.dim(), spec.marginal_factor(k).to_vec())
}

/// Per-layer grids: the singleton origin at layer 0, and `unit` mapped
/// through the marginal covariance factor of each later layer.
pub fn layer_grids(spec: &Ar1Spec, unit: &QuantGrid) -> Result<Vec<QuantGrid>> {
    if unit.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: unit.dim(),
        });
    }
    let mut grids = Vec::with_capacity(spec.steps() + 1);
    grids.push(QuantGrid::singleton(vec![0.0; spec.dim()])?);
    for k in 1..=spec.steps() {
        grids.push(unit.linear_map(spec.marginal_factor(k)).map_err(|e| {
            Error::Numeric(format!(
                "layer {k} grid degenerates under its covariance: {e}"
            ))
        })?);
    }
    Ok(grids)
}

/// Pathwise counting without the synchronization barrier.
///
/// Workers write their cell indices into a shared table exactly as in
/// [`estimate_alg2`], but with `barrier == false` the merge reads the table
/// while they are still running, so results not yet written are lost.
/// Returns `sum_ij p_ij` for every transition. Diagnostic only.
#[doc(hidden)]
pub fn count_unsynchronized(
    spec: &Ar1Spec,
    grids: &[QuantGrid],
    samples: usize,
    streams: &PathStreams,
    workers: usize,
    barrier: bool,
) -> Result<Vec<u64>> {
    validate(spec, grids, samples)?;
    check_small_dim(spec)?;
    if workers == 0 {
        return Err(Error::invalid("worker count must be at least 1"));
    }
    const UNWRITTEN: u32 = u32::MAX;
    let (n, d) = (spec.steps(), spec.dim());
    let backend = NnBackend::KdTree;
    let cells: Vec<AtomicU32> = (0..samples * n)
        .map(|_| AtomicU32::new(UNWRITTEN))
        .collect();
    let chunks = streams.chunk_count(samples);
    let root = root_index(spec, grids, backend);
    let per_worker = chunks.div_ceil(workers);

    let merge = |cells: &[AtomicU32]| -> Vec<u64> {
        (0..n)
            .map(|k| {
                let mut counter = PairCounter::sparse(grids[k].len(), grids[k + 1].len());
                for row in cells.chunks_exact(n) {
                    let i = if k == 0 {
                        root as u32
                    } else {
                        row[k - 1].load(Ordering::Relaxed)
                    };
                    let j = row[k].load(Ordering::Relaxed);
                    if i != UNWRITTEN && j != UNWRITTEN {
                        counter.increment(i as usize, j as usize);
                    }
                }
                counter.finish().total()
            })
            .collect()
    };

    std::thread::scope(|scope| -> Result<Vec<u64>> {
        let mut handles = Vec::new();
        for w in 0..workers {
            let cells = &cells;
            handles.push(scope.spawn(move || -> Result<()> {
                let mut states = vec![0.0; n * d];
                for c in w * per_worker..((w + 1) * per_worker).min(chunks) {
                    let mut stream = streams.chunk_stream(c, chunks, n * d)?;
                    let first = c * streams.chunk_paths();
                    let last = (first + streams.chunk_paths()).min(samples);
                    for m in first..last {
                        simulate_path(spec, &mut stream, &mut states);
                        for (k, x) in states.chunks_exact(d).enumerate() {
                            let j = grids[k + 1].nearest_unchecked(x, backend);
                            cells[m * n + k].store(j as u32, Ordering::Relaxed);
                        }
                    }
                }
                Ok(())
            }));
        }
        let early = (!barrier).then(|| merge(&cells));
        for h in handles {
            h.join()
                .map_err(|_| Error::Numeric("counting worker panicked".into()))??;
        }
        Ok(early.unwrap_or_else(|| merge(&cells)))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TwoFactorParams;
    use crate::rng::EngineKind;

    fn setup(steps: usize, n: usize) -> (Ar1Spec, Vec<QuantGrid>) {
        let params = TwoFactorParams {
            steps,
            horizon: steps as f64 / 365.0,
            ..TwoFactorParams::default()
        };
        let spec = Ar1Spec::two_factor(&params).unwrap();
        let mut stream = StreamFactory::new(EngineKind::Mrg32k3a, 7).serial();
        let unit =
            crate::quant::lloyd_build(&GaussianSampler::standard(2), n, 2, 5, 4000, &mut stream)
                .unwrap()
                .grid;
        let grids = layer_grids(&spec, &unit).unwrap();
        (spec, grids)
    }

    #[test]
    fn pathwise_estimators_agree_bitwise() {
        let (spec, grids) = setup(6, 12);
        for kind in [EngineKind::Lcg48, EngineKind::Mrg32k3a] {
            let factory = StreamFactory::new(kind, 99);
            let streams = PathStreams::new(factory, 37).unwrap();
            let serial = estimate_alg1(
                &spec,
                &grids,
                1000,
                &mut factory.serial(),
                NnBackend::KdTree,
            )
            .unwrap()
            .tree;
            for workers in [1, 2, 3, 5] {
                let exec = Execution::with_workers(workers).unwrap();
                let par = estimate_alg2(&spec, &grids, 1000, &streams, exec, NnBackend::KdTree)
                    .unwrap()
                    .tree;
                assert_eq!(
                    par.layers(),
                    serial.layers(),
                    "{kind} with {workers} workers"
                );
            }
        }
    }

    #[test]
    fn xorwow_alg2_is_worker_invariant() {
        let (spec, grids) = setup(4, 8);
        let streams = PathStreams::new(StreamFactory::new(EngineKind::Xorwow, 3), 50).unwrap();
        let run = |w| {
            estimate_alg2(
                &spec,
                &grids,
                777,
                &streams,
                Execution::with_workers(w).unwrap(),
                NnBackend::BruteForce,
            )
            .unwrap()
            .tree
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn mass_is_conserved() {
        let (spec, grids) = setup(5, 10);
        let streams = PathStreams::with_default_chunks(StreamFactory::new(EngineKind::Lcg48, 1));
        for est in [
            estimate_alg2(
                &spec,
                &grids,
                2000,
                &streams,
                Execution::Sequential,
                NnBackend::KdTree,
            )
            .unwrap(),
            estimate_alg3(
                &spec,
                &grids,
                2000,
                &streams,
                Execution::Sequential,
                NnBackend::KdTree,
            )
            .unwrap(),
        ] {
            est.tree.check_mass().unwrap();
            assert!(est.tree.max_row_deviation() < 1e-12);
        }
    }

    #[test]
    fn alg3_is_worker_invariant() {
        let (spec, grids) = setup(5, 10);
        let streams = PathStreams::with_default_chunks(StreamFactory::new(EngineKind::Mrg32k3a, 5));
        let run = |w| {
            estimate_alg3(
                &spec,
                &grids,
                3000,
                &streams,
                Execution::with_workers(w).unwrap(),
                NnBackend::KdTree,
            )
            .unwrap()
            .tree
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn validates_shapes() {
        let (spec, grids) = setup(3, 4);
        let mut stream = StreamFactory::new(EngineKind::Lcg48, 1).serial();
        assert!(estimate_alg1(&spec, &grids[..3], 10, &mut stream, NnBackend::KdTree).is_err());
        assert!(estimate_alg1(&spec, &grids, 0, &mut stream, NnBackend::KdTree).is_err());
        assert!(marginal_sampler(&spec, 4).is_err());
        assert!(marginal_sampler(&spec, 3).is_ok());
    }

    #[test]
    fn unsynchronized_counts_with_barrier_are_exact() {
        let (spec, grids) = setup(3, 6);
        let streams = PathStreams::new(StreamFactory::new(EngineKind::Lcg48, 2), 16).unwrap();
        for workers in [1, 3] {
            let totals = count_unsynchronized(&spec, &grids, 500, &streams, workers, true).unwrap();
            assert_eq!(totals, vec![500; 3]);
        }
        let early = count_unsynchronized(&spec, &grids, 500, &streams, 3, false).unwrap();
        assert!(early.iter().all(|&t| t <= 500));
    }
}
