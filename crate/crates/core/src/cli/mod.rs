//! The `qtree` command line.

mod config;
mod pipeline;

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{
    parse_config, parse_ini, split_assignment, ModelKind, RunConfig, DEFAULT_GRID_SIZE,
    DEFAULT_SAMPLES, DEFAULT_STEPS, KNOWN_KEYS, WORKERS_ENV,
};
pub use pipeline::{
    build_grids, build_tree, estimate_tree, machine_tag, price_american, price_swing,
    read_bench_csv, run_pipeline, BenchRecord,
};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::pricer::{write_report_csv, PriceReport};
use crate::quant::{lloyd_build, GaussianSampler, NnBackend};
use crate::rng::{estimate_pi_partitioned, EngineKind, PartitionMode, StreamFactory};
use crate::tree::{load_tree, save_tree};

#[derive(Debug, Parser)]
#[command(
    name = "qtree",
    version,
    about = "Quantization trees for Bermudan and swing option pricing",
    after_help = "QTREE_WORKERS sets the default worker count; config files and --workers override it."
)]
pub struct Cli {
    /// Append a timing record of this run to a CSV file.
    #[arg(long, global = true, value_name = "FILE")]
    pub bench_log: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

/// Configuration shared by the tree and pricing commands. Flags override
/// the config file, which overrides built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// INI-style file of `key = value` settings.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Set any config key, e.g. `--set rho=-0.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Estimator: 1 serial, 2 pathwise-parallel, 3 layer-parallel.
    #[arg(long, value_name = "1|2|3")]
    pub algorithm: Option<String>,
    /// Worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Monte Carlo samples (paths) per tree.
    #[arg(short = 'M', long)]
    pub samples: Option<usize>,
    /// Points per layer grid.
    #[arg(short = 'N', long)]
    pub grid_size: Option<usize>,
    /// Time steps.
    #[arg(short = 'n', long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// lcg48, mrg32k3a or xorwow.
    #[arg(long)]
    pub engine: Option<String>,
}

impl ConfigArgs {
    pub fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out: Vec<(String, String)> = self
            .set
            .iter()
            .map(|s| split_assignment(s))
            .collect::<Result<_>>()?;
        let flags = [
            ("algorithm", self.algorithm.clone()),
            ("workers", self.workers.map(|v| v.to_string())),
            ("M", self.samples.map(|v| v.to_string())),
            ("N", self.grid_size.map(|v| v.to_string())),
            ("n", self.steps.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("engine", self.engine.clone()),
        ];
        out.extend(
            flags
                .into_iter()
                .filter_map(|(k, v)| v.map(|v| (k.to_string(), v))),
        );
        Ok(out)
    }

    pub fn resolve(&self, extra: &[(&str, Option<String>)]) -> Result<RunConfig> {
        let mut overrides = self.overrides()?;
        overrides.extend(
            extra
                .iter()
                .filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v))),
        );
        parse_config(self.config.as_deref(), &overrides)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Block,
    Skip,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build grids and a transition tree; prints per-phase wall times as CSV.
    BuildTree {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output tree file.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Price the configured Bermudan option on a tree; prints `price,std_hint,wall_ms`.
    PriceAmerican {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "FILE")]
        tree: Option<PathBuf>,
        /// Per-layer report CSV.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Price a swing contract on a tree; prints `price,std_hint,wall_ms`.
    PriceSwing {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "FILE")]
        tree: Option<PathBuf>,
        /// Minimum total consumption.
        #[arg(long)]
        qmin: usize,
        /// Maximum total consumption.
        #[arg(long)]
        qmax: usize,
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Monte Carlo estimate of pi from partitioned streams; one CSV line.
    BenchRng {
        #[arg(long, default_value = "mrg32k3a")]
        engine: String,
        /// Uniforms drawn (two per point).
        #[arg(long, default_value_t = 10_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        streams: u64,
        #[arg(long, value_enum, default_value_t = ModeArg::Block)]
        mode: ModeArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Nearest-neighbour throughput on a 2-d Gaussian grid; one CSV line.
    BenchNn {
        /// Grid size.
        #[arg(long = "n", default_value_t = 100)]
        grid_size: usize,
        #[arg(long, default_value_t = 36_500_000)]
        queries: u64,
        /// brute or kdtree.
        #[arg(long, default_value = "kdtree")]
        backend: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Grids, tree and Bermudan price in one run; prints the timing record.
    BenchE2e {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Also write the tree here.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn default_workers(flag: Option<usize>) -> Result<usize> {
    match flag {
        Some(w) => Ok(w),
        None => Ok(RunConfig::from_env()?.workers),
    }
}

fn emit_price(out: &mut dyn Write, report: &PriceReport, path: &Option<PathBuf>) -> Result<()> {
    writeln!(out, "{}", report.summary_line())?;
    if let Some(path) = path {
        std::fs::write(path, write_report_csv(&report.rows)?)?;
    }
    Ok(())
}

fn tree_path(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.tree
        .clone()
        .ok_or_else(|| Error::config("tree", "no tree file given"))
}

/// Runs one parsed command, writing its CSV output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    let record = match &cli.command {
        Command::BuildTree { cfg, out: path } => {
            let cfg = cfg.resolve(&[("tree", path_str(path))])?;
            let path = tree_path(&cfg)?;
            let (tree, record) = build_tree(&cfg)?;
            save_tree(&tree, &path)?;
            write!(out, "{}", record.to_csv()?)?;
            record
        }
        Command::PriceAmerican { cfg, tree, report } => {
            let cfg = cfg.resolve(&[("tree", path_str(tree))])?;
            let tree = load_tree(tree_path(&cfg)?)?;
            let result = price_american(&cfg, &tree)?;
            emit_price(out, &result, report)?;
            let mut record = BenchRecord::for_config("price-american", &cfg);
            record.price_ms = result.wall_ms;
            record.price = Some(result.price);
            record
        }
        Command::PriceSwing {
            cfg,
            tree,
            qmin,
            qmax,
            report,
        } => {
            let cfg = cfg.resolve(&[("tree", path_str(tree))])?;
            let tree = load_tree(tree_path(&cfg)?)?;
            let result = price_swing(&cfg, &tree, *qmin, *qmax)?;
            emit_price(out, &result, report)?;
            let mut record = BenchRecord::for_config("price-swing", &cfg);
            record
                .parameters
                .push_str(&format!(";qmin={qmin};qmax={qmax}"));
            record.price_ms = result.wall_ms;
            record.price = Some(result.price);
            record
        }
        Command::BenchRng {
            engine,
            samples,
            streams,
            mode,
            seed,
            workers,
        } => {
            let kind: EngineKind = engine
                .parse()
                .map_err(|e: Error| Error::config("engine", e.to_string()))?;
            let workers = default_workers(*workers)?;
            let exec = Execution::with_workers(workers)
                .map_err(|e| Error::config("workers", e.to_string()))?;
            let part = match mode {
                ModeArg::Block => PartitionMode::Block { block_len: 1 },
                ModeArg::Skip => PartitionMode::SkipAhead,
            };
            let t = Instant::now();
            let est = estimate_pi_partitioned(
                &StreamFactory::new(kind, *seed),
                *samples,
                *streams,
                part,
                exec,
            )?;
            let wall = t.elapsed().as_secs_f64() * 1e3;
            let mode_name = if *mode == ModeArg::Block {
                "block"
            } else {
                "skip"
            };
            writeln!(
                out,
                "engine,samples,streams,mode,estimate,std_error,wall_ms"
            )?;
            writeln!(
                out,
                "{kind},{samples},{streams},{mode_name},{:.8},{:.6e},{wall:.3}",
                est.estimate, est.std_error
            )?;
            let mut record = BenchRecord::new(
                "bench-rng",
                format!("engine={kind};samples={samples};streams={streams};mode={mode_name};seed={seed};workers={workers}"),
            );
            record.simulate_ms = wall;
            record
        }
        Command::BenchNn {
            grid_size,
            queries,
            backend,
            seed,
            workers,
        } => {
            let backend: NnBackend = backend
                .parse()
                .map_err(|e: Error| Error::config("backend", e.to_string()))?;
            let workers = default_workers(*workers)?;
            let exec = Execution::with_workers(workers)
                .map_err(|e| Error::config("workers", e.to_string()))?;
            let (line, record) = bench_nn(*grid_size, *queries, backend, *seed, exec)?;
            writeln!(
                out,
                "N,queries,backend,workers,grid_ms,wall_ms,ns_per_query,checksum"
            )?;
            writeln!(out, "{line}")?;
            record
        }
        Command::BenchE2e { cfg, out: path } => {
            let cfg = cfg.resolve(&[("tree", path_str(path))])?;
            let (_, record) = run_pipeline(&cfg)?;
            write!(out, "{}", record.to_csv()?)?;
            record
        }
    };
    if let Some(log) = &cli.bench_log {
        let mut record = record;
        if record.total_ms == 0.0 {
            record.total_ms = start.elapsed().as_secs_f64() * 1e3;
        }
        record.append_to(log)?;
    }
    Ok(())
}

const NN_BATCH: usize = 1 << 20;

fn bench_nn(
    grid_size: usize,
    queries: u64,
    backend: NnBackend,
    seed: u64,
    exec: Execution,
) -> Result<(String, BenchRecord)> {
    if grid_size == 0 {
        return Err(Error::config("n", "grid size must be at least 1"));
    }
    let factory = StreamFactory::new(EngineKind::Mrg32k3a, seed);
    let t = Instant::now();
    let grid = lloyd_build(
        &GaussianSampler::standard(2),
        grid_size,
        2,
        5,
        (20 * grid_size).max(10_000),
        &mut factory.serial(),
    )?
    .grid;
    let grid_ms = t.elapsed().as_secs_f64() * 1e3;

    let mut stream = factory
        .stream(crate::rng::StreamPartition::block(u64::MAX / 4, 2, 1)?)
        .expect("block partition is valid for mrg32k3a");
    let mut points = vec![0.0; 2 * NN_BATCH];
    let mut idx = vec![0u32; NN_BATCH];
    let mut done = 0u64;
    let mut checksum = 0u64;
    let mut wall = std::time::Duration::ZERO;
    while done < queries {
        let m = (queries - done).min(NN_BATCH as u64) as usize;
        stream.fill_gaussian(&mut points[..2 * m]);
        let t = Instant::now();
        let pts = &points;
        exec.for_each_chunk_mut(&mut idx[..m], 4096, |c, out| {
            for (q, slot) in out.iter_mut().enumerate() {
                let p = 2 * (c * 4096 + q);
                *slot = grid.nearest_unchecked(&pts[p..p + 2], backend) as u32;
            }
        });
        wall += t.elapsed();
        checksum = idx[..m].iter().fold(checksum, |a, &i| {
            a.wrapping_mul(31).wrapping_add(u64::from(i))
        });
        done += m as u64;
    }
    let wall_ms = wall.as_secs_f64() * 1e3;
    let per = wall.as_secs_f64() * 1e9 / queries.max(1) as f64;
    let line = format!(
        "{grid_size},{queries},{backend},{},{grid_ms:.3},{wall_ms:.3},{per:.2},{checksum}",
        exec.workers()
    );
    let mut record = BenchRecord::new(
        "bench-nn",
        format!(
            "N={grid_size};queries={queries};backend={backend};seed={seed};workers={}",
            exec.workers()
        ),
    );
    record.grid_ms = grid_ms;
    record.nn_ms = wall_ms;
    Ok((line, record))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
