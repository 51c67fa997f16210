//! Randomized Lloyd fixed-point iteration and Monte Carlo distortion.

use super::{sq_dist, NnBackend, QuantGrid};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A law on `R^d` that can be sampled from a random stream.
pub trait Sampler {
    fn dim(&self) -> usize;
    fn sample(&self, stream: &mut RngStream, out: &mut [f64]);
}

/// Centred Gaussian `L z` with `z` standard normal and `L` lower triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSampler {
    dim: usize,
    chol: Vec<f64>,
}

impl GaussianSampler {
    pub fn standard(dim: usize) -> Self {
        let mut chol = vec![0.0; dim * dim];
        for i in 0..dim {
            chol[i * dim + i] = 1.0;
        }
        Self { dim, chol }
    }

    /// From a row-major lower-triangular factor.
    pub fn with_factor(dim: usize, chol: Vec<f64>) -> Result<Self> {
        if chol.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: chol.len(),
            });
        }
        Ok(Self { dim, chol })
    }

    pub fn factor(&self) -> &[f64] {
        &self.chol
    }
}

impl Sampler for GaussianSampler {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, stream: &mut RngStream, out: &mut [f64]) {
        let d = self.dim;
        let mut z = [0.0f64; 8];
        let mut heap;
        let z: &mut [f64] = if d <= 8 {
            &mut z[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        stream.fill_gaussian(z);
        for (r, o) in out.iter_mut().enumerate().take(d) {
            *o = (0..=r).map(|c| self.chol[r * d + c] * z[c]).sum();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distortion {
    /// Estimate of `E min_i |X - x_i|^2`.
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

fn summarize(sum: f64, sum_sq: f64, m: usize) -> Distortion {
    let mean = sum / m as f64;
    let var = if m > 1 {
        ((sum_sq - m as f64 * mean * mean) / (m - 1) as f64).max(0.0)
    } else {
        0.0
    };
    Distortion {
        mean,
        std_error: (var / m as f64).sqrt(),
        samples: m,
    }
}

pub fn distortion<S: Sampler + ?Sized>(
    grid: &QuantGrid,
    sampler: &S,
    samples: usize,
    stream: &mut RngStream,
) -> Result<Distortion> {
    if samples == 0 {
        return Err(Error::invalid("distortion needs at least one sample"));
    }
    check_dim(grid.dim(), sampler.dim())?;
    let mut x = vec![0.0; grid.dim()];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        sampler.sample(stream, &mut x);
        let j = grid.nearest_unchecked(&x, NnBackend::KdTree);
        let d = sq_dist(&x, grid.point(j));
        sum += d;
        sum_sq += d * d;
    }
    Ok(summarize(sum, sum_sq, samples))
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// One Lloyd update on a fixed batch of samples (row-major, `grid.dim()`
/// columns). Returns the updated grid and the batch distortion of the input
/// grid. Cells that receive no sample keep their point.
pub fn lloyd_step(
    grid: &QuantGrid,
    samples: &[f64],
    backend: NnBackend,
) -> Result<(QuantGrid, Distortion)> {
    let d = grid.dim();
    if samples.is_empty() || !samples.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: samples.len() % d.max(1),
        });
    }
    let n = grid.len();
    let mut sums = vec![0.0; n * d];
    let mut counts = vec![0usize; n];
    let (mut dist_sum, mut dist_sq) = (0.0, 0.0);
    for x in samples.chunks_exact(d) {
        let j = grid.nearest_unchecked(x, backend);
        let dd = sq_dist(x, grid.point(j));
        dist_sum += dd;
        dist_sq += dd * dd;
        counts[j] += 1;
        for (s, v) in sums[j * d..(j + 1) * d].iter_mut().zip(x) {
            *s += v;
        }
    }
    let mut points = grid.points().to_vec();
    for j in 0..n {
        if counts[j] > 0 {
            for k in 0..d {
                points[j * d + k] = sums[j * d + k] / counts[j] as f64;
            }
        }
    }
    let next = QuantGrid::new(d, points)
        .map_err(|e| Error::Numeric(format!("lloyd update produced an invalid grid: {e}")))?;
    Ok((next, summarize(dist_sum, dist_sq, samples.len() / d)))
}

#[derive(Debug, Clone)]
pub struct LloydOutcome {
    pub grid: QuantGrid,
    /// Batch distortion of the grid entering each iteration.
    pub distortions: Vec<Distortion>,
}

/// Randomized Lloyd: starts from `size` distinct samples and runs
/// `iterations` updates, each on `samples_per_iter` fresh draws.
pub fn lloyd_build<S: Sampler + ?Sized>(
    sampler: &S,
    size: usize,
    dim: usize,
    iterations: usize,
    samples_per_iter: usize,
    stream: &mut RngStream,
) -> Result<LloydOutcome> {
    check_dim(dim, sampler.dim())?;
    if size == 0 {
        return Err(Error::invalid("grid size must be at least 1"));
    }
    if iterations > 0 && samples_per_iter == 0 {
        return Err(Error::invalid("lloyd iterations need samples"));
    }

    let mut init: Vec<f64> = Vec::with_capacity(size * dim);
    let mut x = vec![0.0; dim];
    let max_draws = 100 * size + 1000;
    let mut draws = 0;
    while init.len() < size * dim {
        if draws == max_draws {
            return Err(Error::Numeric(format!(
                "could not draw {size} distinct initial points from the sampler"
            )));
        }
        draws += 1;
        sampler.sample(stream, &mut x);
        if !init.chunks_exact(dim).any(|p| p == x.as_slice()) {
            init.extend_from_slice(&x);
        }
    }
    let mut grid = QuantGrid::new(dim, init)?;

    let mut batch = vec![0.0; samples_per_iter * dim];
    let mut distortions = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        for row in batch.chunks_exact_mut(dim) {
            sampler.sample(stream, row);
        }
        let (next, dist) = lloyd_step(&grid, &batch, NnBackend::KdTree)?;
        grid = next;
        distortions.push(dist);
    }
    Ok(LloydOutcome { grid, distortions })
}
