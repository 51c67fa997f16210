use std::path::Path;
use std::process::{Command, Output};

use qtree::cli::read_bench_csv;
use qtree::pricer::read_report_csv;
use qtree::tree::load_tree;

const SMALL: &str =
    "N = 12\nM = 3000\nn = 20\nT = 0.0548\nlloyd_iterations = 5\nlloyd_samples = 5000\n";

fn qtree(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qtree"));
    cmd.args(args).env_remove("QTREE_WORKERS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("run.ini");
    std::fs::write(&path, SMALL).unwrap();
    path.display().to_string()
}

fn build(dir: &Path, cfg: &str, name: &str, extra: &[&str]) -> String {
    let out = dir.join(name).display().to_string();
    let mut args = vec!["build-tree", "--config", cfg, "--out", &out];
    args.extend_from_slice(extra);
    let o = qtree(&args, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn help_lists_every_subcommand() {
    let o = qtree(&["--help"], &[]);
    assert!(o.status.success());
    let text = stdout(&o);
    for cmd in [
        "build-tree",
        "price-american",
        "price-swing",
        "bench-rng",
        "bench-nn",
        "bench-e2e",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    assert!(text.contains("QTREE_WORKERS"));
}

#[test]
fn fixed_seed_gives_identical_tree_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let a = build(dir.path(), &cfg, "a.qt", &["--workers", "1"]);
    let b = build(dir.path(), &cfg, "b.qt", &["--workers", "3"]);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn serial_and_pathwise_trees_price_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let t1 = build(dir.path(), &cfg, "1.qt", &["--algorithm", "1"]);
    let t2 = build(
        dir.path(),
        &cfg,
        "2.qt",
        &["--algorithm", "2", "--workers", "2"],
    );
    let price = |t: &str| {
        let o = qtree(&["price-american", "--tree", t, "--config", &cfg], &[]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o).split(',').next().unwrap().to_string()
    };
    assert_eq!(price(&t1), price(&t2));
}

#[test]
fn build_prints_phase_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("t.qt").display().to_string();
    let o = qtree(
        &[
            "build-tree",
            "--config",
            &cfg,
            "--out",
            &out,
            "--algorithm",
            "3",
        ],
        &[("QTREE_WORKERS", "3")],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let records = read_bench_csv(&stdout(&o)).unwrap();
    assert_eq!(records.len(), 1);
    let r = &records[0];
    assert_eq!(r.command, "build-tree");
    assert!(r.parameters.contains("workers=3"), "{}", r.parameters);
    assert!(r.phase_sum_ms() <= r.total_ms + 1e-9);
    assert_eq!(load_tree(&out).unwrap().steps(), 20);
}

#[test]
fn pricing_outputs_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let tree = build(dir.path(), &cfg, "t.qt", &[]);
    let report = dir.path().join("report.csv");
    let log = dir.path().join("bench.csv");
    let o = qtree(
        &[
            "price-swing",
            "--tree",
            &tree,
            "--config",
            &cfg,
            "--qmin",
            "5",
            "--qmax",
            "15",
            "--report",
            report.to_str().unwrap(),
            "--bench-log",
            log.to_str().unwrap(),
        ],
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    let fields: Vec<f64> = line.trim().split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(fields.len(), 3);
    let rows = read_report_csv(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rows.len(), 21);
    let o = qtree(
        &[
            "price-american",
            "--tree",
            &tree,
            "--config",
            &cfg,
            "--bench-log",
            log.to_str().unwrap(),
        ],
        &[],
    );
    assert!(o.status.success());
    let logged = read_bench_csv(&std::fs::read_to_string(&log).unwrap()).unwrap();
    assert_eq!(logged.len(), 2);
    assert_eq!(logged[0].price, Some(fields[0]));
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let o = qtree(
        &[
            "build-tree",
            "--config",
            &cfg,
            "--set",
            "rho=1.5",
            "--out",
            "x.qt",
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("rho"));

    let o = qtree(
        &["build-tree", "--config", &cfg, "--out", "x.qt"],
        &[("QTREE_WORKERS", "0")],
    );
    assert_eq!(o.status.code(), Some(1));

    let missing = dir.path().join("none.qt").display().to_string();
    let o = qtree(
        &["price-american", "--tree", &missing, "--config", &cfg],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("none.qt"));

    let bad = dir.path().join("bad.qt");
    std::fs::write(&bad, b"QTRX\x01\x00\x00\x00").unwrap();
    let o = qtree(
        &[
            "price-american",
            "--tree",
            bad.to_str().unwrap(),
            "--config",
            &cfg,
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));

    let tree = build(dir.path(), &cfg, "t.qt", &[]);
    let o = qtree(
        &[
            "price-swing",
            "--tree",
            &tree,
            "--config",
            &cfg,
            "--qmin",
            "21",
            "--qmax",
            "21",
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(1));
    let o = qtree(
        &[
            "price-american",
            "--tree",
            &tree,
            "--config",
            &cfg,
            "-n",
            "19",
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(1));

    let o = qtree(
        &[
            "bench-rng",
            "--engine",
            "xorwow",
            "--streams",
            "4",
            "--mode",
            "skip",
            "--samples",
            "1000",
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(1));
    let o = qtree(&["no-such-command"], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn micro_benchmarks_print_csv() {
    let o = qtree(
        &[
            "bench-rng",
            "--engine",
            "lcg48",
            "--samples",
            "200000",
            "--streams",
            "4",
            "--mode",
            "skip",
        ],
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let line = text.lines().nth(1).unwrap();
    let estimate: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
    assert!((estimate - std::f64::consts::PI).abs() < 0.05);

    let brute = qtree(
        &[
            "bench-nn",
            "--n",
            "50",
            "--queries",
            "20000",
            "--backend",
            "brute",
        ],
        &[],
    );
    let kd = qtree(
        &[
            "bench-nn",
            "--n",
            "50",
            "--queries",
            "20000",
            "--backend",
            "kdtree",
        ],
        &[],
    );
    let checksum = |o: &Output| {
        stdout(o)
            .lines()
            .nth(1)
            .unwrap()
            .rsplit(',')
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(checksum(&brute), checksum(&kd));
}

#[test]
fn end_to_end_record_carries_price() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let o = qtree(&["bench-e2e", "--config", &cfg, "--workers", "2"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = &read_bench_csv(&stdout(&o)).unwrap()[0];
    assert!(r.price.unwrap() > 0.0);
    assert!(r.phase_sum_ms() <= r.total_ms + 1e-9);
}
