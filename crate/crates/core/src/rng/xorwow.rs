//! Marsaglia's xorwow generator (xorshift plus a Weyl sequence).

use crate::error::{Error, Result};

pub const WEYL_INCREMENT: u32 = 362_437;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct XorwowState {
    pub v: u32,
    pub w: u32,
    pub x: u32,
    pub y: u32,
    pub z: u32,
    pub d: u32,
}

impl XorwowState {
    pub fn new(v: u32, w: u32, x: u32, y: u32, z: u32, d: u32) -> Result<Self> {
        if v | w | x | y | z == 0 {
            return Err(Error::invalid(
                "xorwow shift registers must not all be zero",
            ));
        }
        Ok(Self { v, w, x, y, z, d })
    }

    /// Seeding with the constants of the CURAND host initializer.
    pub fn seeded(seed: u64) -> Self {
        let s0 = (seed as u32) ^ 0xaad2_6b49;
        let s1 = ((seed >> 32) as u32) ^ 0xf7dc_efdd;
        let t0 = 1_099_087_573u32.wrapping_mul(s0);
        let t1 = 2_591_861_531u32.wrapping_mul(s1);
        Self {
            x: 123_456_789u32.wrapping_add(t0),
            y: 362_436_069 ^ t0,
            z: 521_288_629u32.wrapping_add(t1),
            w: 88_675_123 ^ t1,
            v: 5_783_321u32.wrapping_add(t0),
            d: 6_615_241u32.wrapping_add(t1).wrapping_add(t0),
        }
    }

    #[inline]
    pub fn step(&mut self) {
        let t = self.x ^ (self.x >> 2);
        self.x = self.y;
        self.y = self.z;
        self.z = self.w;
        self.w = self.v;
        self.v = (self.v ^ (self.v << 4)) ^ (t ^ (t << 1));
        self.d = self.d.wrapping_add(WEYL_INCREMENT);
    }

    #[inline]
    pub fn word(&self) -> u32 {
        self.v.wrapping_add(self.d)
    }

    #[inline]
    pub fn uniform(&self) -> f64 {
        self.word() as f64 * (1.0 / 4_294_967_296.0)
    }

    pub fn registers_zero(&self) -> bool {
        self.v | self.w | self.x | self.y | self.z == 0
    }
}

pub fn xorwow_next(state: XorwowState) -> (u32, XorwowState) {
    let mut next = state;
    next.step();
    (next.word(), next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_executed_step() {
        // t = 0; registers rotate so w = 1; v = (1 ^ 16) ^ 0 = 17; d = 362437
        let s = XorwowState::new(1, 0, 0, 0, 0, 0).unwrap();
        let (out, n) = xorwow_next(s);
        assert_eq!((n.v, n.w, n.x, n.y, n.z, n.d), (17, 1, 0, 0, 0, 362_437));
        assert_eq!(out, 17 + 362_437);
    }

    #[test]
    fn weyl_counter_increment() {
        let s = XorwowState::seeded(5);
        let (_, a) = xorwow_next(s);
        let (_, b) = xorwow_next(a);
        assert_eq!(b.d.wrapping_sub(s.d), 2 * WEYL_INCREMENT);
    }

    #[test]
    fn registers_never_all_zero() {
        let mut s = XorwowState::seeded(11);
        for _ in 0..1_000_000 {
            s.step();
            assert!(!s.registers_zero());
        }
    }

    #[test]
    fn zero_registers_rejected() {
        assert!(XorwowState::new(0, 0, 0, 0, 0, 9).is_err());
    }
}
