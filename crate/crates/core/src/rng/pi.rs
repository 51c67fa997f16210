//! Monte Carlo estimate of π from the quarter unit disk.

use super::{EngineKind, PartitionMode, StreamFactory, StreamPartition, UniformSource};
use crate::error::{Error, Result};
use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub points: u64,
}

impl PiEstimate {
    fn from_counts(inside: u64, points: u64) -> Self {
        let estimate = 4.0 * inside as f64 / points as f64;
        let std_error = (estimate * (4.0 - estimate) / points as f64).sqrt();
        Self {
            estimate,
            std_error,
            points,
        }
    }
}

fn check_samples(samples: u64) -> Result<()> {
    if samples < 2 || !samples.is_multiple_of(2) {
        return Err(Error::invalid("sample count must be even and at least 2"));
    }
    Ok(())
}

fn count_inside<S: UniformSource>(src: &mut S, points: u64) -> u64 {
    let mut inside = 0;
    for _ in 0..points {
        let x = src.next_uniform();
        let y = src.next_uniform();
        if x * x + y * y <= 1.0 {
            inside += 1;
        }
    }
    inside
}

/// Uses `samples` uniforms as `samples / 2` points of the unit square.
pub fn estimate_pi<S: UniformSource>(mut src: S, samples: u64) -> Result<PiEstimate> {
    check_samples(samples)?;
    let points = samples / 2;
    Ok(PiEstimate::from_counts(
        count_inside(&mut src, points),
        points,
    ))
}

/// Splits the points over `streams` partitioned streams and sums the hit counts.
pub fn estimate_pi_partitioned(
    factory: &StreamFactory,
    samples: u64,
    streams: u64,
    mode: PartitionMode,
    exec: Execution,
) -> Result<PiEstimate> {
    check_samples(samples)?;
    if streams == 0 {
        return Err(Error::invalid("stream count must be positive"));
    }
    let points = samples / 2;
    let per = points / streams;
    let extra = points % streams;
    let mode = match mode {
        // blocks sized so that the union is the leading serial segment
        PartitionMode::Block { .. } => PartitionMode::Block {
            block_len: 2 * (per + u64::from(extra > 0)).max(1),
        },
        m => m,
    };
    if factory.kind == EngineKind::Xorwow && mode == PartitionMode::SkipAhead && streams > 1 {
        return Err(Error::UnsupportedMode(
            "skip-ahead partitioning is not available for xorwow".into(),
        ));
    }
    let counts = exec.map_range(streams as usize, |i| -> Result<u64> {
        let i = i as u64;
        let n = per + u64::from(i < extra);
        let mut s = factory.stream(StreamPartition::new(mode, streams, i)?)?;
        Ok(count_inside(&mut s, n))
    });
    let inside = counts.into_iter().sum::<Result<u64>>()?;
    Ok(PiEstimate::from_counts(inside, points))
}
