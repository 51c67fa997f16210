//! Gaussian two-factor model and its exact AR(1) discretization.
//!
//! The state `X_k` stacks the two Ornstein-Uhlenbeck integrals
//! `int_0^{t_k} exp(-alpha_i (t_k - s)) dW^i_s`. Over a step of length `dt`
//! it moves as `X_{k+1} = A X_k + T eps` with
//!
//! ```text
//! A = diag(exp(-alpha_1 dt), exp(-alpha_2 dt))
//! T T' = S(dt),  S_ij(dt) = rho_ij (1 - exp(-(alpha_i + alpha_j) dt)) / (alpha_i + alpha_j)
//! ```
//!
//! and, started at zero, `X_k ~ N(0, S(t_k))`. The one-dimensional Brownian
//! chain used for Bermudan benchmarks is the same recursion with `A = 1`,
//! `T = sqrt(dt)`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoFactorParams {
    pub s0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub rho: f64,
    pub rate: f64,
    pub strike: f64,
    pub horizon: f64,
    pub steps: usize,
}

impl Default for TwoFactorParams {
    fn default() -> Self {
        Self {
            s0: 20.0,
            sigma1: 0.7,
            sigma2: 0.5,
            alpha1: 4.0,
            alpha2: 0.1,
            rho: -0.3,
            rate: 0.0,
            strike: 20.0,
            horizon: 1.0,
            steps: 365,
        }
    }
}

fn check(ok: bool, key: &str, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, msg))
    }
}

impl TwoFactorParams {
    pub fn validate(&self) -> Result<()> {
        check(
            self.s0.is_finite() && self.s0 > 0.0,
            "s0",
            "must be positive",
        )?;
        check(
            self.sigma1.is_finite() && self.sigma1 >= 0.0,
            "sigma1",
            "must be non-negative",
        )?;
        check(
            self.sigma2.is_finite() && self.sigma2 >= 0.0,
            "sigma2",
            "must be non-negative",
        )?;
        check(
            self.alpha1.is_finite() && self.alpha1 > 0.0,
            "alpha1",
            "must be positive",
        )?;
        check(
            self.alpha2.is_finite() && self.alpha2 > 0.0,
            "alpha2",
            "must be positive",
        )?;
        check(
            (-1.0..=1.0).contains(&self.rho),
            "rho",
            "must lie in [-1, 1]",
        )?;
        check(self.rate.is_finite(), "r", "must be finite")?;
        check(self.strike.is_finite(), "K", "must be finite")?;
        check(
            self.horizon.is_finite() && self.horizon > 0.0,
            "T",
            "must be positive",
        )?;
        check(self.steps >= 1, "n", "must be at least 1")?;
        Ok(())
    }

    pub fn time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.steps as f64
    }

    /// Covariance of `X_t` started from zero, row-major 2x2.
    pub fn covariance(&self, t: f64) -> [f64; 4] {
        let c11 = ou_cov(self.alpha1, self.alpha1, 1.0, t);
        let c22 = ou_cov(self.alpha2, self.alpha2, 1.0, t);
        let c12 = ou_cov(self.alpha1, self.alpha2, self.rho, t);
        [c11, c12, c12, c22]
    }

    /// Variance of `sigma1 X^1_t + sigma2 X^2_t`.
    pub fn mu(&self, t: f64) -> f64 {
        let [c11, c12, _, c22] = self.covariance(t);
        self.sigma1 * self.sigma1 * c11
            + self.sigma2 * self.sigma2 * c22
            + 2.0 * self.sigma1 * self.sigma2 * c12
    }

    /// `s0 exp(sigma1 x1 + sigma2 x2 - mu_t / 2)`; the exponential factor has unit mean.
    pub fn spot(&self, t: f64, x: &[f64]) -> f64 {
        self.s0 * (self.sigma1 * x[0] + self.sigma2 * x[1] - 0.5 * self.mu(t)).exp()
    }

    /// Discounted spread `exp(-r t_k) (S_{t_k} - K)`; may be negative.
    pub fn swing_payoff(&self, k: usize, x: &[f64]) -> f64 {
        let t = self.time(k);
        (-self.rate * t).exp() * (self.spot(t, x) - self.strike)
    }

    /// Discounted exercise value of a call or put at date `k`.
    pub fn exercise_value(&self, style: OptionStyle, k: usize, x: &[f64]) -> f64 {
        let t = self.time(k);
        (-self.rate * t).exp() * style.intrinsic(self.spot(t, x), self.strike)
    }
}

/// `rho (1 - exp(-(a + b) t)) / (a + b)`.
pub fn ou_cov(a: f64, b: f64, rho: f64, t: f64) -> f64 {
    let s = a + b;
    rho * -(-s * t).exp_m1() / s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptionStyle {
    Call,
    #[default]
    Put,
}

impl OptionStyle {
    pub fn intrinsic(self, spot: f64, strike: f64) -> f64 {
        match self {
            OptionStyle::Call => (spot - strike).max(0.0),
            OptionStyle::Put => (strike - spot).max(0.0),
        }
    }
}

impl fmt::Display for OptionStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptionStyle::Call => "call",
            OptionStyle::Put => "put",
        })
    }
}

impl FromStr for OptionStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "call" => Ok(OptionStyle::Call),
            "put" => Ok(OptionStyle::Put),
            other => Err(Error::invalid(format!("unknown option style `{other}`"))),
        }
    }
}

/// Black-Scholes asset driven by a scalar Brownian state `x = W_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlackScholesParams {
    pub s0: f64,
    pub rate: f64,
    pub sigma: f64,
    pub strike: f64,
    pub horizon: f64,
    pub steps: usize,
}

impl BlackScholesParams {
    pub fn validate(&self) -> Result<()> {
        check(
            self.s0.is_finite() && self.s0 > 0.0,
            "s0",
            "must be positive",
        )?;
        check(
            self.sigma.is_finite() && self.sigma >= 0.0,
            "sigma",
            "must be non-negative",
        )?;
        check(self.rate.is_finite(), "r", "must be finite")?;
        check(self.strike.is_finite(), "K", "must be finite")?;
        check(
            self.horizon.is_finite() && self.horizon > 0.0,
            "T",
            "must be positive",
        )?;
        check(self.steps >= 1, "n", "must be at least 1")?;
        Ok(())
    }

    pub fn time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.steps as f64
    }

    pub fn spot(&self, t: f64, x: f64) -> f64 {
        self.s0 * ((self.rate - 0.5 * self.sigma * self.sigma) * t + self.sigma * x).exp()
    }

    /// Discounted exercise value at date `k`.
    pub fn exercise_value(&self, style: OptionStyle, k: usize, x: f64) -> f64 {
        let t = self.time(k);
        (-self.rate * t).exp() * style.intrinsic(self.spot(t, x), self.strike)
    }
}

/// Undiscounted call obstacle `(s0 exp((r - sigma^2/2) t + sigma x) - K)^+`.
pub fn amer_payoff(t: f64, x: f64, params: &BlackScholesParams) -> f64 {
    OptionStyle::Call.intrinsic(params.spot(t, x), params.strike)
}

/// Per-step AR(1) coefficients and per-layer marginal covariances, all
/// stored row-major `d x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ar1Spec {
    dim: usize,
    times: Vec<f64>,
    drift: Vec<f64>,
    noise: Vec<f64>,
    marginal_cov: Vec<f64>,
    marginal_chol: Vec<f64>,
}

impl Ar1Spec {
    pub fn two_factor(params: &TwoFactorParams) -> Result<Self> {
        params.validate()?;
        let n = params.steps;
        let times: Vec<f64> = (0..=n).map(|k| params.time(k)).collect();
        let mut drift = Vec::with_capacity(4 * n);
        let mut noise = Vec::with_capacity(4 * n);
        for k in 0..n {
            let dt = times[k + 1] - times[k];
            drift.extend_from_slice(&[
                (-params.alpha1 * dt).exp(),
                0.0,
                0.0,
                (-params.alpha2 * dt).exp(),
            ]);
            noise.extend_from_slice(&cholesky(&params.covariance(dt), 2)?);
        }
        let mut marginal_cov = Vec::with_capacity(4 * (n + 1));
        let mut marginal_chol = Vec::with_capacity(4 * (n + 1));
        for &t in &times {
            let c = params.covariance(t);
            marginal_chol.extend_from_slice(&cholesky(&c, 2)?);
            marginal_cov.extend_from_slice(&c);
        }
        Ok(Self {
            dim: 2,
            times,
            drift,
            noise,
            marginal_cov,
            marginal_chol,
        })
    }

    /// Scalar Brownian motion sampled at `k * horizon / steps`.
    pub fn brownian(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) || steps == 0 {
            return Err(Error::invalid(
                "brownian chain needs a positive horizon and steps",
            ));
        }
        let times: Vec<f64> = (0..=steps)
            .map(|k| horizon * k as f64 / steps as f64)
            .collect();
        let noise = times.windows(2).map(|w| (w[1] - w[0]).sqrt()).collect();
        Ok(Self {
            dim: 1,
            drift: vec![1.0; steps],
            noise,
            marginal_cov: times.clone(),
            marginal_chol: times.iter().map(|t| t.sqrt()).collect(),
            times,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of transitions `n`; layers are `0..=n`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn drift(&self, k: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.drift[k * dd..(k + 1) * dd]
    }

    pub fn noise(&self, k: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.noise[k * dd..(k + 1) * dd]
    }

    pub fn marginal_cov(&self, k: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.marginal_cov[k * dd..(k + 1) * dd]
    }

    pub fn marginal_factor(&self, k: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.marginal_chol[k * dd..(k + 1) * dd]
    }

    /// `out = A_k x + T_k eps`.
    #[inline]
    pub fn advance(&self, k: usize, x: &[f64], eps: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let a = self.drift(k);
        let t = self.noise(k);
        match d {
            1 => out[0] = a[0] * x[0] + t[0] * eps[0],
            2 => {
                out[0] = a[0] * x[0] + a[1] * x[1] + t[0] * eps[0] + t[1] * eps[1];
                out[1] = a[2] * x[0] + a[3] * x[1] + t[2] * eps[0] + t[3] * eps[1];
            }
            _ => {
                for r in 0..d {
                    out[r] = (0..d)
                        .map(|c| a[r * d + c] * x[c] + t[r * d + c] * eps[c])
                        .sum();
                }
            }
        }
    }

    /// `out = L_k z` with `L_k` the factor of the layer-`k` marginal covariance.
    #[inline]
    pub fn marginal_from_normals(&self, k: usize, z: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let l = self.marginal_factor(k);
        for r in 0..d {
            out[r] = (0..=r).map(|c| l[r * d + c] * z[c]).sum();
        }
    }
}

/// Lower-triangular factor of a symmetric positive semi-definite matrix;
/// rank-deficient directions get a zero column.
pub fn cholesky(m: &[f64], d: usize) -> Result<Vec<f64>> {
    if m.len() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            got: m.len(),
        });
    }
    let scale = (0..d)
        .map(|i| m[i * d + i].abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let pivot = m[j * d + j] - (0..j).map(|k| l[j * d + k] * l[j * d + k]).sum::<f64>();
        if pivot < -tol {
            return Err(Error::Numeric(format!(
                "covariance is not positive semi-definite (pivot {pivot:e})"
            )));
        }
        if pivot <= tol {
            continue;
        }
        let ljj = pivot.sqrt();
        l[j * d + j] = ljj;
        for i in j + 1..d {
            let s = m[i * d + j] - (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum::<f64>();
            l[i * d + j] = s / ljj;
        }
    }
    Ok(l)
}

/// Chain state at a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub layer: usize,
    pub x: Vec<f64>,
}

impl PathState {
    pub fn origin(dim: usize) -> Self {
        Self {
            layer: 0,
            x: vec![0.0; dim],
        }
    }
}

/// Applies one AR(1) step to `state` with standard normal input `eps`.
pub fn step(state: &PathState, spec: &Ar1Spec, eps: &[f64]) -> Result<PathState> {
    if state.layer >= spec.steps() {
        return Err(Error::invalid(format!(
            "layer {} has no successor in a {}-step chain",
            state.layer,
            spec.steps()
        )));
    }
    if state.x.len() != spec.dim() || eps.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: state.x.len().min(eps.len()),
        });
    }
    let mut x = vec![0.0; spec.dim()];
    spec.advance(state.layer, &state.x, eps, &mut x);
    Ok(PathState {
        layer: state.layer + 1,
        x,
    })
}

/// Spot price of a two-factor state.
pub fn spot(state: &PathState, params: &TwoFactorParams) -> f64 {
    params.spot(params.time(state.layer), &state.x)
}
