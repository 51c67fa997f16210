//! 48-bit linear congruential generator with the POSIX `drand48` constants.

use crate::error::{Error, Result};

pub const DRAND48_A: u64 = 0x5DEE_CE66D;
pub const DRAND48_C: u64 = 0xB;
pub const LCG48_BITS: u32 = 48;
const MASK: u64 = (1 << LCG48_BITS) - 1;
const INV_MODULUS: f64 = 1.0 / (1u64 << LCG48_BITS) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lcg48State {
    pub x: u64,
    pub a: u64,
    pub c: u64,
}

impl Lcg48State {
    pub fn new(x: u64, a: u64, c: u64) -> Result<Self> {
        if x > MASK || a > MASK || c > MASK {
            return Err(Error::invalid("lcg48 values must fit in 48 bits"));
        }
        if a & 1 == 0 {
            return Err(Error::invalid("lcg48 multiplier must be odd"));
        }
        Ok(Self { x, a, c })
    }

    /// `srand48` seeding: the low 32 bits of the seed become the high state bits.
    pub fn drand48(seed: u64) -> Self {
        Self {
            x: ((seed << 16) | 0x330E) & MASK,
            a: DRAND48_A,
            c: DRAND48_C,
        }
    }

    #[inline]
    pub fn step(&mut self) {
        self.x = self.a.wrapping_mul(self.x).wrapping_add(self.c) & MASK;
    }

    #[inline]
    pub fn uniform(&self) -> f64 {
        self.x as f64 * INV_MODULUS
    }

    /// Applies `x -> (a_s x + c_s) mod 2^48` for precomputed skip coefficients.
    #[inline]
    pub fn apply(&mut self, a_s: u64, c_s: u64) {
        self.x = a_s.wrapping_mul(self.x).wrapping_add(c_s) & MASK;
    }

    pub fn skip(&mut self, steps: u64) {
        if steps == 0 {
            return;
        }
        let (a_s, c_s) = skip_coefficients(self.a, self.c, steps).expect("steps > 0");
        self.apply(a_s, c_s);
    }
}

/// One step of the recurrence; returns the new state's uniform in `[0, 1)`.
pub fn lcg48_next(state: Lcg48State) -> (f64, Lcg48State) {
    let mut next = state;
    next.step();
    (next.uniform(), next)
}

/// Coefficients `(a^s, c * sum_{i<s} a^i)` mod 2^48 of the `s`-fold map,
/// computed by repeated squaring of the affine map.
pub fn skip_coefficients(a: u64, c: u64, steps: u64) -> Result<(u64, u64)> {
    if steps == 0 {
        return Err(Error::invalid("skip length must be at least 1"));
    }
    let (mut acc_a, mut acc_c) = (1u64, 0u64);
    let (mut base_a, mut base_c) = (a & MASK, c & MASK);
    let mut s = steps;
    while s > 0 {
        if s & 1 == 1 {
            acc_a = base_a.wrapping_mul(acc_a) & MASK;
            acc_c = base_a.wrapping_mul(acc_c).wrapping_add(base_c) & MASK;
        }
        base_c = base_a.wrapping_mul(base_c).wrapping_add(base_c) & MASK;
        base_a = base_a.wrapping_mul(base_a) & MASK;
        s >>= 1;
    }
    Ok((acc_a, acc_c))
}
