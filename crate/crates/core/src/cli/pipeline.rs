//! Grid building, tree estimation and pricing driven by a [`RunConfig`].

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::config::{ModelKind, RunConfig};
use crate::error::{Error, Result};
use crate::model::Ar1Spec;
use crate::par::Execution;
use crate::pricer::{
    price_report, solve_stopping, solve_swing, PriceReport, Problem, StoppingProblem, SwingProblem,
};
use crate::quant::{lloyd_build, load_grid, GaussianSampler, QuantGrid};
use crate::rng::StreamFactory;
use crate::tree::{
    estimate_alg1, estimate_alg2, estimate_alg3, layer_grids, Estimate, EstimatorKind, PathStreams,
    QuantTree,
};

/// Offset separating the Lloyd training stream from the path streams.
const LLOYD_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// One timing line. Phases are disjoint, so they never sum past `total_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub command: String,
    /// Effective configuration as `key=value` pairs joined by `;`.
    pub parameters: String,
    pub grid_ms: f64,
    pub simulate_ms: f64,
    pub nn_ms: f64,
    pub merge_ms: f64,
    pub normalize_ms: f64,
    pub price_ms: f64,
    pub total_ms: f64,
    pub price: Option<f64>,
    pub machine: String,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

impl BenchRecord {
    pub fn new(command: &str, parameters: String) -> Self {
        Self {
            command: command.to_string(),
            parameters,
            grid_ms: 0.0,
            simulate_ms: 0.0,
            nn_ms: 0.0,
            merge_ms: 0.0,
            normalize_ms: 0.0,
            price_ms: 0.0,
            total_ms: 0.0,
            price: None,
            machine: machine_tag(),
        }
    }

    pub fn for_config(command: &str, cfg: &RunConfig) -> Self {
        let params: Vec<String> = cfg
            .pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        Self::new(command, params.join(";"))
    }

    fn add_estimate(&mut self, est: &Estimate) {
        let t = est.timings;
        self.simulate_ms = ms(t.simulate);
        self.nn_ms = ms(t.nearest);
        self.merge_ms = ms(t.merge);
        self.normalize_ms = ms(t.normalize);
    }

    pub fn phase_sum_ms(&self) -> f64 {
        self.grid_ms
            + self.simulate_ms
            + self.nn_ms
            + self.merge_ms
            + self.normalize_ms
            + self.price_ms
    }

    /// Header plus one data line.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(self)?;
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Appends to a CSV log, writing the header only into an empty file.
    pub fn append_to(&self, path: &Path) -> Result<()> {
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let fresh = file.metadata()?.len() == 0;
        let mut w = csv::WriterBuilder::new()
            .has_headers(fresh)
            .from_writer(Vec::new());
        w.serialize(self)?;
        file.write_all(&w.into_inner().map_err(|e| e.into_error())?)?;
        Ok(())
    }
}

pub fn read_bench_csv(text: &str) -> Result<Vec<BenchRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn machine_tag() -> String {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{}-{}cpu",
        std::env::consts::OS,
        std::env::consts::ARCH,
        cpus
    )
}

/// Per-layer grids: the unit grid from `grid` if given, else Lloyd on a
/// standard normal, scaled into each layer.
pub fn build_grids(cfg: &RunConfig, spec: &Ar1Spec) -> Result<Vec<QuantGrid>> {
    let unit = match &cfg.grid {
        Some(path) => load_grid(path)?,
        None => {
            let factory = StreamFactory::new(cfg.engine, cfg.seed.wrapping_add(LLOYD_SEED_OFFSET));
            let sampler = GaussianSampler::standard(cfg.dim());
            lloyd_build(
                &sampler,
                cfg.grid_size,
                cfg.dim(),
                cfg.lloyd_iterations,
                cfg.lloyd_samples,
                &mut factory.serial(),
            )?
            .grid
        }
    };
    if unit.dim() != cfg.dim() {
        return Err(Error::config(
            "grid",
            format!(
                "grid has dimension {}, model needs {}",
                unit.dim(),
                cfg.dim()
            ),
        ));
    }
    layer_grids(spec, &unit)
}

pub fn estimate_tree(cfg: &RunConfig, spec: &Ar1Spec, grids: &[QuantGrid]) -> Result<Estimate> {
    let factory = StreamFactory::new(cfg.engine, cfg.seed);
    let streams = PathStreams::new(factory, cfg.chunk_paths)?;
    let exec = Execution::with_workers(cfg.workers)?;
    match cfg.algorithm {
        EstimatorKind::AlgI => {
            estimate_alg1(spec, grids, cfg.samples, &mut factory.serial(), cfg.backend)
        }
        EstimatorKind::AlgII => {
            estimate_alg2(spec, grids, cfg.samples, &streams, exec, cfg.backend)
        }
        EstimatorKind::AlgIII => {
            estimate_alg3(spec, grids, cfg.samples, &streams, exec, cfg.backend)
        }
    }
}

/// Grids plus tree, with the bench record of the build.
pub fn build_tree(cfg: &RunConfig) -> Result<(QuantTree, BenchRecord)> {
    let start = Instant::now();
    let mut record = BenchRecord::for_config("build-tree", cfg);
    let spec = cfg.ar1_spec()?;
    let t = Instant::now();
    let grids = build_grids(cfg, &spec)?;
    record.grid_ms = ms(t.elapsed());
    let est = estimate_tree(cfg, &spec, &grids)?;
    record.add_estimate(&est);
    record.total_ms = ms(start.elapsed());
    Ok((est.tree, record))
}

fn check_tree(cfg: &RunConfig, tree: &QuantTree) -> Result<()> {
    if tree.steps() != cfg.params.steps {
        return Err(Error::config(
            "n",
            format!(
                "tree has {} steps, config says {}",
                tree.steps(),
                cfg.params.steps
            ),
        ));
    }
    if tree.grid(0).dim() != cfg.dim() {
        return Err(Error::config(
            "model",
            format!(
                "tree has dimension {}, {} needs {}",
                tree.grid(0).dim(),
                cfg.model,
                cfg.dim()
            ),
        ));
    }
    Ok(())
}

/// Bermudan option in the configured style, exercisable on every layer.
pub fn price_american(cfg: &RunConfig, tree: &QuantTree) -> Result<PriceReport> {
    check_tree(cfg, tree)?;
    let problem = match cfg.model {
        ModelKind::TwoFactor => {
            StoppingProblem::from_fn(tree, |k, x| cfg.params.exercise_value(cfg.option, k, x))?
        }
        ModelKind::BlackScholes => {
            let bs = cfg.black_scholes();
            StoppingProblem::from_fn(tree, |k, x| bs.exercise_value(cfg.option, k, x[0]))?
        }
    };
    let result = solve_stopping(tree, &problem, Execution::with_workers(cfg.workers)?)?;
    Ok(price_report(&result, tree, Problem::Stopping(&problem)))
}

/// Swing contract paying the discounted `S - K` per unit taken.
pub fn price_swing(
    cfg: &RunConfig,
    tree: &QuantTree,
    qmin: usize,
    qmax: usize,
) -> Result<PriceReport> {
    check_tree(cfg, tree)?;
    let problem = match cfg.model {
        ModelKind::TwoFactor => {
            SwingProblem::from_fn(tree, qmin, qmax, |k, x| cfg.params.swing_payoff(k, x))?
        }
        ModelKind::BlackScholes => {
            let bs = cfg.black_scholes();
            SwingProblem::from_fn(tree, qmin, qmax, |k, x| {
                let t = bs.time(k);
                (-bs.rate * t).exp() * (bs.spot(t, x[0]) - bs.strike)
            })?
        }
    };
    let result = solve_swing(tree, &problem, Execution::with_workers(cfg.workers)?)?;
    Ok(price_report(&result, tree, Problem::Swing(&problem)))
}

/// Builds grids and tree, writes the tree when `tree` is set, and prices
/// the configured Bermudan option.
pub fn run_pipeline(cfg: &RunConfig) -> Result<(PriceReport, BenchRecord)> {
    cfg.validate()?;
    let start = Instant::now();
    let (tree, mut record) = build_tree(cfg)?;
    record.command = "bench-e2e".into();
    if let Some(path) = &cfg.tree {
        crate::tree::save_tree(&tree, path)?;
    }
    let t = Instant::now();
    let report = price_american(cfg, &tree)?;
    record.price_ms = ms(t.elapsed());
    record.price = Some(report.price);
    record.total_ms = ms(start.elapsed());
    Ok((report, record))
}
