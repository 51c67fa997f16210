//! Partitionable uniform and Gaussian random streams.
//!
//! Three engines are available: a 48-bit LCG (`drand48`), MRG32k3a and
//! xorwow. A [`RngStream`] is one member of a [`StreamPartition`] of an
//! engine's serial sequence. The LCG and MRG32k3a support both block and
//! skip-ahead partitions with exact `O(log s)` jumps, so any set of streams
//! can be recombined into the serial sequence bit for bit.

mod lcg48;
mod mrg32k3a;
mod pi;
mod xorwow;

use std::fmt;
use std::str::FromStr;

pub use lcg48::{
    lcg48_next, skip_coefficients as lcg48_skip_coefficients, Lcg48State, DRAND48_A, DRAND48_C,
};
pub use mrg32k3a::{mrg32k3a_next, mrg32k3a_skip, Mrg32k3aState, M1 as MRG_M1, M2 as MRG_M2};
pub use pi::{estimate_pi, estimate_pi_partitioned, PiEstimate};
pub use xorwow::{xorwow_next, XorwowState, WEYL_INCREMENT};

use crate::error::{Error, Result};

/// Default number of sequential burn-in steps for scrambled xorwow blocks.
pub const XORWOW_DEFAULT_BURN_IN: u32 = 64;

/// A source of uniform variates in `[0, 1)`.
pub trait UniformSource {
    fn next_uniform(&mut self) -> f64;
}

impl<S: UniformSource + ?Sized> UniformSource for &mut S {
    fn next_uniform(&mut self) -> f64 {
        (**self).next_uniform()
    }
}

/// SplitMix64, used only to derive seeds.
#[derive(Debug, Clone)]
pub(crate) struct SplitMix64(u64);

impl SplitMix64 {
    pub(crate) fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub(crate) fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EngineKind {
    Lcg48,
    Mrg32k3a,
    Xorwow,
}

impl EngineKind {
    pub fn supports_skip_ahead(self) -> bool {
        !matches!(self, EngineKind::Xorwow)
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineKind::Lcg48 => "lcg48",
            EngineKind::Mrg32k3a => "mrg32k3a",
            EngineKind::Xorwow => "xorwow",
        })
    }
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lcg48" | "drand48" => Ok(EngineKind::Lcg48),
            "mrg32k3a" => Ok(EngineKind::Mrg32k3a),
            "xorwow" | "curand" => Ok(EngineKind::Xorwow),
            other => Err(Error::invalid(format!("unknown engine `{other}`"))),
        }
    }
}

/// Engine state, positioned so that its current output is the next draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Lcg48(Lcg48State),
    Mrg32k3a(Mrg32k3aState),
    Xorwow(XorwowState),
}

impl Engine {
    pub fn seeded(kind: EngineKind, seed: u64) -> Self {
        match kind {
            EngineKind::Lcg48 => Engine::Lcg48(Lcg48State::drand48(seed)),
            EngineKind::Mrg32k3a => Engine::Mrg32k3a(Mrg32k3aState::seeded(seed)),
            EngineKind::Xorwow => Engine::Xorwow(XorwowState::seeded(seed)),
        }
    }

    pub fn kind(&self) -> EngineKind {
        match self {
            Engine::Lcg48(_) => EngineKind::Lcg48,
            Engine::Mrg32k3a(_) => EngineKind::Mrg32k3a,
            Engine::Xorwow(_) => EngineKind::Xorwow,
        }
    }

    #[inline]
    fn step(&mut self) {
        match self {
            Engine::Lcg48(s) => s.step(),
            Engine::Mrg32k3a(s) => s.step(),
            Engine::Xorwow(s) => s.step(),
        }
    }

    #[inline]
    fn uniform(&self) -> f64 {
        match self {
            Engine::Lcg48(s) => s.uniform(),
            Engine::Mrg32k3a(s) => s.uniform(),
            Engine::Xorwow(s) => s.uniform(),
        }
    }

    /// Advances `steps` positions; `O(log steps)` for the LCG and MRG32k3a,
    /// sequential for xorwow.
    pub fn advance(&mut self, steps: u64) {
        match self {
            Engine::Lcg48(s) => s.skip(steps),
            Engine::Mrg32k3a(s) => s.skip(steps),
            Engine::Xorwow(s) => {
                for _ in 0..steps {
                    s.step();
                }
            }
        }
    }

    /// Serial draws `0..n` of this engine, without any partition.
    pub fn serial(&self, n: usize) -> Vec<f64> {
        let mut e = *self;
        (0..n)
            .map(|_| {
                e.step();
                e.uniform()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    /// Stream `i` is the contiguous segment `[i * block_len, (i + 1) * block_len)`.
    Block { block_len: u64 },
    /// Stream `i` is the subsequence `i, i + s, i + 2s, ...`.
    SkipAhead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamPartition {
    mode: PartitionMode,
    stream_count: u64,
    stream_index: u64,
}

impl StreamPartition {
    pub fn new(mode: PartitionMode, stream_count: u64, stream_index: u64) -> Result<Self> {
        if stream_count == 0 {
            return Err(Error::invalid("stream count must be positive"));
        }
        if stream_index >= stream_count {
            return Err(Error::invalid(format!(
                "stream index {stream_index} out of range for {stream_count} streams"
            )));
        }
        if let PartitionMode::Block { block_len: 0 } = mode {
            return Err(Error::invalid("block length must be positive"));
        }
        Ok(Self {
            mode,
            stream_count,
            stream_index,
        })
    }

    pub fn serial() -> Self {
        Self {
            mode: PartitionMode::SkipAhead,
            stream_count: 1,
            stream_index: 0,
        }
    }

    pub fn block(block_len: u64, stream_count: u64, stream_index: u64) -> Result<Self> {
        Self::new(
            PartitionMode::Block { block_len },
            stream_count,
            stream_index,
        )
    }

    pub fn skip_ahead(stream_count: u64, stream_index: u64) -> Result<Self> {
        Self::new(PartitionMode::SkipAhead, stream_count, stream_index)
    }

    pub fn mode(&self) -> PartitionMode {
        self.mode
    }

    pub fn stream_count(&self) -> u64 {
        self.stream_count
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stride {
    Unit,
    Lcg {
        a: u64,
        c: u64,
    },
    Mrg {
        m1: [[u64; 3]; 3],
        m2: [[u64; 3]; 3],
    },
}

/// One stream of a partitioned generator, with a cached Box-Muller spare.
#[derive(Debug, Clone)]
pub struct RngStream {
    engine: Engine,
    partition: StreamPartition,
    stride: Stride,
    spare: Option<f64>,
}

impl RngStream {
    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn partition(&self) -> &StreamPartition {
        &self.partition
    }

    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        let u = self.engine.uniform();
        match (&mut self.engine, &self.stride) {
            (e, Stride::Unit) => e.step(),
            (Engine::Lcg48(s), Stride::Lcg { a, c }) => s.apply(*a, *c),
            (Engine::Mrg32k3a(s), Stride::Mrg { m1, m2 }) => s.apply(m1, m2),
            _ => unreachable!("stride matches engine by construction"),
        }
        u
    }

    /// Standard normal deviate via Box-Muller; each pair of normals consumes
    /// exactly two uniforms.
    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        let (z1, z2) = box_muller(u1, u2);
        self.spare = Some(z2);
        z1
    }

    /// Drops a cached normal so the next Gaussian starts on a fresh pair.
    pub fn discard_spare(&mut self) {
        self.spare = None;
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        for z in out {
            *z = self.next_gaussian();
        }
    }
}

impl UniformSource for RngStream {
    #[inline]
    fn next_uniform(&mut self) -> f64 {
        self.next_f64()
    }
}

/// `(r cos 2πu2, r sin 2πu2)` with `r = sqrt(-2 ln u1)`.
#[inline]
pub fn box_muller(u1: f64, u2: f64) -> (f64, f64) {
    // the LCG and xorwow can return an exact zero
    let u1 = if u1 > 0.0 { u1 } else { f64::EPSILON * 0.5 };
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}

/// Builds streams for one engine and seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFactory {
    pub kind: EngineKind,
    pub seed: u64,
    /// Burn-in applied to scrambled xorwow blocks.
    pub xorwow_burn_in: u32,
}

impl StreamFactory {
    pub fn new(kind: EngineKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            xorwow_burn_in: XORWOW_DEFAULT_BURN_IN,
        }
    }

    pub fn serial(&self) -> RngStream {
        self.stream(StreamPartition::serial())
            .expect("serial partition is valid for every engine")
    }

    pub fn stream(&self, partition: StreamPartition) -> Result<RngStream> {
        let mut engine = Engine::seeded(self.kind, self.seed);
        let index = partition.stream_index;
        let stride = match (partition.mode, &mut engine) {
            (PartitionMode::SkipAhead, Engine::Xorwow(_)) if partition.stream_count > 1 => {
                return Err(Error::UnsupportedMode(
                    "skip-ahead partitioning is not available for xorwow".into(),
                ));
            }
            (_, Engine::Xorwow(state)) => {
                if index > 0 {
                    // block streams other than the first start from a scrambled seed
                    let mut sm =
                        SplitMix64::new(self.seed ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03));
                    *state = XorwowState::seeded(sm.next_u64());
                    for _ in 0..self.xorwow_burn_in {
                        state.step();
                    }
                }
                Stride::Unit
            }
            (PartitionMode::Block { block_len }, e) => {
                let offset = index
                    .checked_mul(block_len)
                    .ok_or_else(|| Error::invalid("block offset overflows u64"))?;
                e.advance(offset);
                Stride::Unit
            }
            (PartitionMode::SkipAhead, e) => {
                e.advance(index);
                let s = partition.stream_count;
                match e {
                    _ if s == 1 => Stride::Unit,
                    Engine::Lcg48(st) => {
                        let (a, c) = lcg48::skip_coefficients(st.a, st.c, s)?;
                        Stride::Lcg { a, c }
                    }
                    Engine::Mrg32k3a(_) => {
                        let (m1, m2) = mrg32k3a::skip_matrices(s);
                        Stride::Mrg { m1, m2 }
                    }
                    Engine::Xorwow(_) => unreachable!(),
                }
            }
        };
        // position the engine on its first output
        engine.step();
        Ok(RngStream {
            engine,
            partition,
            stride,
            spare: None,
        })
    }
}

/// Stream `partition.stream_index` of the engine seeded with `seed`.
pub fn split_stream(kind: EngineKind, seed: u64, partition: StreamPartition) -> Result<RngStream> {
    StreamFactory::new(kind, seed).stream(partition)
}
