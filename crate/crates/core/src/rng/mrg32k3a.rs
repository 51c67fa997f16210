//! L'Ecuyer's combined multiple recursive generator MRG32k3a with
//! companion-matrix skip-ahead.

use crate::error::{Error, Result};

pub const M1: u64 = 4_294_967_087; // 2^32 - 209
pub const M2: u64 = 4_294_944_443; // 2^32 - 22853

const A12: i64 = 1_403_580;
const A13: i64 = 810_728;
const A21: i64 = 527_612;
const A23: i64 = 1_370_589;

type Mat3 = [[u64; 3]; 3];

/// Component histories, oldest first: `s1 = (x1[n-3], x1[n-2], x1[n-1])`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mrg32k3aState {
    pub s1: [u64; 3],
    pub s2: [u64; 3],
}

impl Mrg32k3aState {
    pub fn new(s1: [u64; 3], s2: [u64; 3]) -> Result<Self> {
        if s1.iter().any(|&v| v >= M1) || s2.iter().any(|&v| v >= M2) {
            return Err(Error::invalid("mrg32k3a seed component out of range"));
        }
        if s1.iter().all(|&v| v == 0) || s2.iter().all(|&v| v == 0) {
            return Err(Error::invalid("mrg32k3a seed history must not be all zero"));
        }
        Ok(Self { s1, s2 })
    }

    pub fn seeded(seed: u64) -> Self {
        let mut sm = super::SplitMix64::new(seed);
        let mut s1 = [0u64; 3];
        let mut s2 = [0u64; 3];
        for v in s1.iter_mut() {
            *v = sm.next_u64() % M1;
        }
        for v in s2.iter_mut() {
            *v = sm.next_u64() % M2;
        }
        if s1.iter().all(|&v| v == 0) {
            s1 = [12345; 3];
        }
        if s2.iter().all(|&v| v == 0) {
            s2 = [12345; 3];
        }
        Self { s1, s2 }
    }

    #[inline]
    pub fn step(&mut self) {
        let [a0, a1, a2] = self.s1;
        let mut p1 = (A12 * a1 as i64 - A13 * a0 as i64) % M1 as i64;
        if p1 < 0 {
            p1 += M1 as i64;
        }
        self.s1 = [a1, a2, p1 as u64];

        let [b0, b1, b2] = self.s2;
        let mut p2 = (A21 * b2 as i64 - A23 * b0 as i64) % M2 as i64;
        if p2 < 0 {
            p2 += M2 as i64;
        }
        self.s2 = [b1, b2, p2 as u64];
    }

    /// Combined output `(x1 - x2) mod m1` of the most recent step.
    #[inline]
    pub fn combined(&self) -> u64 {
        let (p1, p2) = (self.s1[2], self.s2[2]);
        if p1 >= p2 {
            p1 - p2
        } else {
            p1 + M1 - p2
        }
    }

    /// Uniform `(x + 1) / (m1 + 1)`, strictly inside `(0, 1)`.
    #[inline]
    pub fn uniform(&self) -> f64 {
        (self.combined() + 1) as f64 / (M1 as f64 + 1.0)
    }

    pub fn skip(&mut self, steps: u64) {
        if steps == 0 {
            return;
        }
        let (m1, m2) = skip_matrices(steps);
        self.apply(&m1, &m2);
    }

    #[inline]
    pub(crate) fn apply(&mut self, m1: &Mat3, m2: &Mat3) {
        self.s1 = mat_vec(m1, &self.s1, M1);
        self.s2 = mat_vec(m2, &self.s2, M2);
    }
}

pub fn mrg32k3a_next(state: Mrg32k3aState) -> (f64, Mrg32k3aState) {
    let mut next = state;
    next.step();
    (next.uniform(), next)
}

pub fn mrg32k3a_skip(state: Mrg32k3aState, steps: u64) -> Mrg32k3aState {
    let mut next = state;
    next.skip(steps);
    next
}

fn companion1() -> Mat3 {
    [[0, 1, 0], [0, 0, 1], [M1 - A13 as u64, A12 as u64, 0]]
}

fn companion2() -> Mat3 {
    [[0, 1, 0], [0, 0, 1], [M2 - A23 as u64, 0, A21 as u64]]
}

/// Companion matrices raised to `steps`, modulo `m1` and `m2`.
pub(crate) fn skip_matrices(steps: u64) -> (Mat3, Mat3) {
    (
        mat_pow(companion1(), steps, M1),
        mat_pow(companion2(), steps, M2),
    )
}

fn mat_mul(a: &Mat3, b: &Mat3, m: u64) -> Mat3 {
    let mut out = [[0u64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0u128;
            for k in 0..3 {
                acc += a[i][k] as u128 * b[k][j] as u128;
            }
            out[i][j] = (acc % m as u128) as u64;
        }
    }
    out
}

fn mat_vec(a: &Mat3, v: &[u64; 3], m: u64) -> [u64; 3] {
    let mut out = [0u64; 3];
    for (o, row) in out.iter_mut().zip(a) {
        let acc: u128 = row
            .iter()
            .zip(v)
            .map(|(&x, &y)| x as u128 * y as u128)
            .sum();
        *o = (acc % m as u128) as u64;
    }
    out
}

fn mat_pow(mut base: Mat3, mut e: u64, m: u64) -> Mat3 {
    let mut acc = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
    while e > 0 {
        if e & 1 == 1 {
            acc = mat_mul(&base, &acc, m);
        }
        base = mat_mul(&base, &base, m);
        e >>= 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_seed_one_step() {
        let s = Mrg32k3aState::new([0, 0, 1], [0, 0, 1]).unwrap();
        let (u, n) = mrg32k3a_next(s);
        // x1 = 1403580 * 0 - 810728 * 0 = 0; x2 = 527612 * 1 - 1370589 * 0 = 527612
        assert_eq!(n.s1, [0, 1, 0]);
        assert_eq!(n.s2, [0, 1, 527_612]);
        let x = (M1 - 527_612) as f64;
        assert_eq!(u, (x + 1.0) / (M1 as f64 + 1.0));
    }

    #[test]
    fn negative_numerator_is_normalized() {
        // only the subtracted term is nonzero
        let s = Mrg32k3aState::new([M1 - 1, 0, 0], [M2 - 1, 0, 0]).unwrap();
        let (_, n) = mrg32k3a_next(s);
        let expect1 = ((-(A13 as i128) * (M1 - 1) as i128).rem_euclid(M1 as i128)) as u64;
        let expect2 = ((-(A23 as i128) * (M2 - 1) as i128).rem_euclid(M2 as i128)) as u64;
        assert_eq!(n.s1[2], expect1);
        assert_eq!(n.s2[2], expect2);
        assert!(n.combined() < M1);
    }

    #[test]
    fn skip_zero_and_one() {
        let s = Mrg32k3aState::seeded(7);
        assert_eq!(mrg32k3a_skip(s, 0), s);
        assert_eq!(mrg32k3a_skip(s, 1), mrg32k3a_next(s).1);
    }

    #[test]
    fn skip_matches_loop() {
        let mut looped = Mrg32k3aState::seeded(99);
        let start = looped;
        for _ in 0..100_000 {
            looped.step();
        }
        assert_eq!(mrg32k3a_skip(start, 100_000), looped);
    }

    #[test]
    fn empirical_mean() {
        let mut s = Mrg32k3aState::seeded(2024);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            s.step();
            let u = s.uniform();
            assert!(u > 0.0 && u < 1.0);
            sum += u;
        }
        let mean = sum / n as f64;
        assert!((0.499..=0.501).contains(&mean), "mean {mean}");
    }

    #[test]
    fn rejects_bad_seed() {
        assert!(Mrg32k3aState::new([0, 0, 0], [1, 1, 1]).is_err());
        assert!(Mrg32k3aState::new([M1, 1, 1], [1, 1, 1]).is_err());
    }
}
