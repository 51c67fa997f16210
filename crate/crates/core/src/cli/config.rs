//! Run configuration: INI-style `key = value` files overridden by flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Ar1Spec, BlackScholesParams, OptionStyle, TwoFactorParams};
use crate::quant::NnBackend;
use crate::rng::EngineKind;
use crate::tree::EstimatorKind;

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_STEPS: usize = 365;
pub const DEFAULT_GRID_SIZE: usize = 100;
pub const WORKERS_ENV: &str = "QTREE_WORKERS";

/// Every key a config file may set.
pub const KNOWN_KEYS: &[&str] = &[
    "model",
    "s0",
    "sigma",
    "sigma1",
    "sigma2",
    "alpha1",
    "alpha2",
    "rho",
    "r",
    "K",
    "T",
    "n",
    "N",
    "M",
    "seed",
    "engine",
    "algorithm",
    "workers",
    "option",
    "backend",
    "lloyd_iterations",
    "lloyd_samples",
    "chunk_paths",
    "grid",
    "tree",
    "out",
    "bench_log",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelKind {
    /// Two-factor Ornstein-Uhlenbeck log-spot.
    #[default]
    TwoFactor,
    /// One-dimensional Black-Scholes driven by a Brownian chain.
    BlackScholes,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['_', ' '], "-")
            .as_str()
        {
            "two-factor" | "twofactor" | "ou" => Ok(ModelKind::TwoFactor),
            "black-scholes" | "blackscholes" | "bs" => Ok(ModelKind::BlackScholes),
            other => Err(Error::invalid(format!("unknown model `{other}`"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::TwoFactor => "two-factor",
            ModelKind::BlackScholes => "black-scholes",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    /// Shared market parameters; `sigma1` is unused by the Black-Scholes model.
    pub params: TwoFactorParams,
    /// Black-Scholes volatility.
    pub sigma: f64,
    /// Points per layer grid (uniform across layers).
    pub grid_size: usize,
    pub samples: usize,
    pub seed: u64,
    pub engine: EngineKind,
    pub algorithm: EstimatorKind,
    pub workers: usize,
    pub option: OptionStyle,
    pub backend: NnBackend,
    pub lloyd_iterations: usize,
    pub lloyd_samples: usize,
    pub chunk_paths: usize,
    /// Unit grid to scale into every layer instead of running Lloyd.
    pub grid: Option<PathBuf>,
    pub tree: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub bench_log: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::TwoFactor,
            params: TwoFactorParams {
                steps: DEFAULT_STEPS,
                ..TwoFactorParams::default()
            },
            sigma: 0.2,
            grid_size: DEFAULT_GRID_SIZE,
            samples: DEFAULT_SAMPLES,
            seed: 1,
            engine: EngineKind::Mrg32k3a,
            algorithm: EstimatorKind::AlgII,
            workers: 1,
            option: OptionStyle::Put,
            backend: NnBackend::KdTree,
            lloyd_iterations: 20,
            lloyd_samples: 100_000,
            chunk_paths: crate::tree::DEFAULT_CHUNK_PATHS,
            grid: None,
            tree: None,
            out: None,
            bench_log: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

impl RunConfig {
    /// Defaults with the worker count taken from `QTREE_WORKERS` when set.
    pub fn from_env() -> Result<Self> {
        let mut cfg = Self::default();
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            cfg.workers = parse_value(WORKERS_ENV, &v)?;
        }
        Ok(cfg)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        if value.is_empty() {
            return Err(Error::config(key, "missing value"));
        }
        let p = &mut self.params;
        match key {
            "model" => self.model = parse_value(key, value)?,
            "s0" => p.s0 = parse_value(key, value)?,
            "sigma" => self.sigma = parse_value(key, value)?,
            "sigma1" => p.sigma1 = parse_value(key, value)?,
            "sigma2" => p.sigma2 = parse_value(key, value)?,
            "alpha1" => p.alpha1 = parse_value(key, value)?,
            "alpha2" => p.alpha2 = parse_value(key, value)?,
            "rho" => p.rho = parse_value(key, value)?,
            "r" => p.rate = parse_value(key, value)?,
            "K" => p.strike = parse_value(key, value)?,
            "T" => p.horizon = parse_value(key, value)?,
            "n" => p.steps = parse_value(key, value)?,
            "N" => self.grid_size = parse_value(key, value)?,
            "M" => self.samples = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "engine" => self.engine = parse_value(key, value)?,
            "algorithm" => self.algorithm = parse_value(key, value)?,
            "workers" => self.workers = parse_value(key, value)?,
            "option" => self.option = parse_value(key, value)?,
            "backend" => self.backend = parse_value(key, value)?,
            "lloyd_iterations" => self.lloyd_iterations = parse_value(key, value)?,
            "lloyd_samples" => self.lloyd_samples = parse_value(key, value)?,
            "chunk_paths" => self.chunk_paths = parse_value(key, value)?,
            "grid" => self.grid = Some(value.into()),
            "tree" => self.tree = Some(value.into()),
            "out" => self.out = Some(value.into()),
            "bench_log" => self.bench_log = Some(value.into()),
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    /// Range checks; every message names the offending key.
    pub fn validate(&self) -> Result<()> {
        match self.model {
            ModelKind::TwoFactor => self.params.validate()?,
            ModelKind::BlackScholes => {
                self.black_scholes().validate()?;
            }
        }
        let positive = [
            ("N", self.grid_size),
            ("M", self.samples),
            ("workers", self.workers),
            ("lloyd_iterations", self.lloyd_iterations),
            ("chunk_paths", self.chunk_paths),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if self.lloyd_samples < self.grid_size {
            return Err(Error::config("lloyd_samples", "must be at least N"));
        }
        if self.samples > u32::MAX as usize {
            return Err(Error::config("M", "must fit in 32 bits"));
        }
        if self.grid_size > u32::MAX as usize {
            return Err(Error::config("N", "must fit in 32 bits"));
        }
        Ok(())
    }

    pub fn black_scholes(&self) -> BlackScholesParams {
        BlackScholesParams {
            s0: self.params.s0,
            rate: self.params.rate,
            sigma: self.sigma,
            strike: self.params.strike,
            horizon: self.params.horizon,
            steps: self.params.steps,
        }
    }

    pub fn dim(&self) -> usize {
        match self.model {
            ModelKind::TwoFactor => 2,
            ModelKind::BlackScholes => 1,
        }
    }

    pub fn ar1_spec(&self) -> Result<Ar1Spec> {
        match self.model {
            ModelKind::TwoFactor => Ar1Spec::two_factor(&self.params),
            ModelKind::BlackScholes => Ar1Spec::brownian(self.params.horizon, self.params.steps),
        }
    }

    /// Every key with its effective value, in [`KNOWN_KEYS`] order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let p = &self.params;
        let path = |o: &Option<PathBuf>| o.as_ref().map(|p| p.display().to_string());
        let all: Vec<(&'static str, Option<String>)> = vec![
            ("model", Some(self.model.to_string())),
            ("s0", Some(p.s0.to_string())),
            ("sigma", Some(self.sigma.to_string())),
            ("sigma1", Some(p.sigma1.to_string())),
            ("sigma2", Some(p.sigma2.to_string())),
            ("alpha1", Some(p.alpha1.to_string())),
            ("alpha2", Some(p.alpha2.to_string())),
            ("rho", Some(p.rho.to_string())),
            ("r", Some(p.rate.to_string())),
            ("K", Some(p.strike.to_string())),
            ("T", Some(p.horizon.to_string())),
            ("n", Some(p.steps.to_string())),
            ("N", Some(self.grid_size.to_string())),
            ("M", Some(self.samples.to_string())),
            ("seed", Some(self.seed.to_string())),
            ("engine", Some(self.engine.to_string())),
            ("algorithm", Some(self.algorithm.to_string())),
            ("workers", Some(self.workers.to_string())),
            ("option", Some(self.option.to_string())),
            ("backend", Some(self.backend.to_string())),
            ("lloyd_iterations", Some(self.lloyd_iterations.to_string())),
            ("lloyd_samples", Some(self.lloyd_samples.to_string())),
            ("chunk_paths", Some(self.chunk_paths.to_string())),
            ("grid", path(&self.grid)),
            ("tree", path(&self.tree)),
            ("out", path(&self.out)),
            ("bench_log", path(&self.bench_log)),
        ];
        all.into_iter()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
            .collect()
    }
}

/// Reads `key = value` pairs from INI text. Section headers are accepted
/// and ignored; `#` and `;` start comments.
pub fn parse_ini(text: &str) -> Result<Vec<(String, String)>> {
    let ini = ini::Ini::load_from_str(text).map_err(|e| Error::config("file", e.to_string()))?;
    let mut out = Vec::new();
    for (_, props) in ini.iter() {
        for (k, v) in props.iter() {
            if !KNOWN_KEYS.contains(&k) {
                return Err(Error::config(k, "unknown key"));
            }
            out.push((k.to_string(), v.to_string()));
        }
    }
    Ok(out)
}

/// Builds a config from defaults (with `QTREE_WORKERS`), then the optional
/// file, then the flag overrides, and validates the result.
pub fn parse_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_env()?;
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(Error::at_path(path))?;
        for (k, v) in parse_ini(&text)? {
            cfg.set(&k, &v)?;
        }
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Splits a `key=value` flag argument.
pub fn split_assignment(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::config(s, "expected key=value"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}
