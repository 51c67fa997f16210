mod common;

use proptest::prelude::*;
use qtree::model::{Ar1Spec, TwoFactorParams};
use qtree::quant::{lloyd_build, GaussianSampler, NnBackend, QuantGrid};
use qtree::rng::{EngineKind, StreamFactory};
use qtree::tree::{
    count_unsynchronized, estimate_alg1, estimate_alg2, estimate_alg3, layer_grids, load_tree,
    save_tree, PathStreams, QuantTree,
};
use qtree::Execution;

use common::{cells_1d, gaussian_rectangle};

const KD: NnBackend = NnBackend::KdTree;

fn two_factor(steps: usize, horizon: f64) -> Ar1Spec {
    Ar1Spec::two_factor(&TwoFactorParams {
        steps,
        horizon,
        ..TwoFactorParams::default()
    })
    .unwrap()
}

fn unit_grid(dim: usize, n: usize, seed: u64) -> QuantGrid {
    let mut s = StreamFactory::new(EngineKind::Mrg32k3a, seed).serial();
    lloyd_build(
        &GaussianSampler::standard(dim),
        n,
        dim,
        8,
        20 * n + 2000,
        &mut s,
    )
    .unwrap()
    .grid
}

fn estimate(
    kind: u8,
    spec: &Ar1Spec,
    grids: &[QuantGrid],
    m: usize,
    factory: StreamFactory,
    workers: usize,
) -> QuantTree {
    let streams = PathStreams::with_default_chunks(factory);
    let exec = Execution::with_workers(workers).unwrap();
    match kind {
        1 => estimate_alg1(spec, grids, m, &mut factory.serial(), KD),
        2 => estimate_alg2(spec, grids, m, &streams, exec, KD),
        _ => estimate_alg3(spec, grids, m, &streams, exec, KD),
    }
    .unwrap()
    .tree
}

/// Brownian chain on two dates with two-point grids, where every
/// transition probability has a closed form.
fn two_cell_instance() -> (Ar1Spec, Vec<QuantGrid>, Vec<Vec<Vec<f64>>>) {
    let spec = Ar1Spec::brownian(0.5, 2).unwrap();
    let g1 = [-0.3, 0.5];
    let g2 = [-0.6, 0.4];
    let grids = vec![
        QuantGrid::singleton(vec![0.0]).unwrap(),
        QuantGrid::new(1, g1.to_vec()).unwrap(),
        QuantGrid::new(1, g2.to_vec()).unwrap(),
    ];
    let (c1, c2) = (cells_1d(&g1), cells_1d(&g2));
    let everything = (f64::NEG_INFINITY, f64::INFINITY);
    let root: Vec<f64> = c1
        .iter()
        .map(|&a| gaussian_rectangle(0.25, 0.25, a, everything))
        .collect();
    let second: Vec<Vec<f64>> = c1
        .iter()
        .zip(&root)
        .map(|(&a, &pa)| {
            c2.iter()
                .map(|&b| gaussian_rectangle(0.25, 0.25, a, b) / pa)
                .collect()
        })
        .collect();
    (spec, grids, vec![vec![root], second])
}

fn check_against_exact(tree: &QuantTree, exact: &[Vec<Vec<f64>>], band: f64) {
    for (k, matrix) in exact.iter().enumerate() {
        let layer = tree.transition(k);
        for (i, row) in matrix.iter().enumerate() {
            let n = layer.counts().row_count(i) as f64;
            for (j, &p) in row.iter().enumerate() {
                let sd = (p * (1.0 - p) / n).sqrt();
                let got = layer.prob(i, j);
                assert!(
                    (got - p).abs() <= band * sd,
                    "layer {k} ({i},{j}): {got} vs {p} (sd {sd})"
                );
            }
        }
    }
}

#[test]
fn quadrature_oracle_is_normalized() {
    let (_, _, exact) = two_cell_instance();
    for matrix in &exact {
        for row in matrix {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn two_cell_instance_matches_closed_form() {
    let (spec, grids, exact) = two_cell_instance();
    let factory = StreamFactory::new(EngineKind::Mrg32k3a, 2024);
    for kind in 1..=3 {
        let tree = estimate(kind, &spec, &grids, 10_000, factory, 2);
        check_against_exact(&tree, &exact, 4.0);
    }
}

#[test]
fn single_cell_chain_is_certain() {
    let spec = two_factor(5, 5.0 / 365.0);
    let grids = layer_grids(&spec, &QuantGrid::singleton(vec![0.0, 0.0]).unwrap()).unwrap();
    for kind in 1..=3 {
        let tree = estimate(
            kind,
            &spec,
            &grids,
            300,
            StreamFactory::new(EngineKind::Lcg48, 1),
            1,
        );
        for layer in tree.layers() {
            assert_eq!(layer.probs(), &[1.0]);
        }
    }
}

#[test]
fn single_path_leaves_one_entry_per_layer() {
    let spec = two_factor(6, 6.0 / 365.0);
    let grids = layer_grids(&spec, &unit_grid(2, 9, 1)).unwrap();
    let tree = estimate(
        1,
        &spec,
        &grids,
        1,
        StreamFactory::new(EngineKind::Mrg32k3a, 9),
        1,
    );
    for layer in tree.layers() {
        assert_eq!(layer.probs(), &[1.0]);
    }
}

#[test]
fn pathwise_estimate_is_schedule_independent() {
    let spec = two_factor(20, 20.0 / 365.0);
    let grids = layer_grids(&spec, &unit_grid(2, 25, 2)).unwrap();
    for kind in [EngineKind::Lcg48, EngineKind::Mrg32k3a] {
        let factory = StreamFactory::new(kind, 77);
        let serial = estimate(1, &spec, &grids, 5000, factory, 1);
        for workers in [1, 2, 4, 8] {
            let par = estimate(2, &spec, &grids, 5000, factory, workers);
            assert_eq!(par.layers(), serial.layers(), "{kind}, {workers} workers");
        }
    }
}

#[test]
fn layer_parallel_agrees_with_serial_statistically() {
    let spec = two_factor(10, 10.0 / 365.0);
    let grids = layer_grids(&spec, &unit_grid(2, 10, 3)).unwrap();
    let a = estimate(
        1,
        &spec,
        &grids,
        100_000,
        StreamFactory::new(EngineKind::Mrg32k3a, 5),
        1,
    );
    let b = estimate(
        3,
        &spec,
        &grids,
        100_000,
        StreamFactory::new(EngineKind::Mrg32k3a, 6),
        2,
    );
    let mut worst: f64 = 0.0;
    for (la, lb) in a.layers().iter().zip(b.layers()) {
        for i in 0..la.from_len() {
            let (na, nb) = (la.counts().row_count(i), lb.counts().row_count(i));
            if na == 0 || nb == 0 {
                continue;
            }
            for j in 0..la.to_len() {
                let (ca, cb) = (la.counts().get(i, j), lb.counts().get(i, j));
                let pooled = (ca + cb) as f64 / (na + nb) as f64;
                let diff = (la.prob(i, j) - lb.prob(i, j)).abs();
                let se = (pooled * (1.0 - pooled) * (1.0 / na as f64 + 1.0 / nb as f64)).sqrt();
                if diff > 0.0 {
                    worst = worst.max(diff / se);
                }
            }
        }
    }
    assert!(worst <= 5.0, "largest standardized difference {worst}");
}

#[test]
fn unvisited_rows_survive_a_round_trip() {
    let spec = two_factor(4, 4.0 / 365.0);
    let grids = layer_grids(&spec, &unit_grid(2, 40, 4)).unwrap();
    let tree = estimate(
        2,
        &spec,
        &grids,
        15,
        StreamFactory::new(EngineKind::Lcg48, 3),
        1,
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.qt");
    save_tree(&tree, &path).unwrap();
    let back = load_tree(&path).unwrap();
    assert_eq!(back, tree);
    let unvisited = tree.transition(2).unvisited_rows();
    assert!(!unvisited.is_empty());
    assert_eq!(back.transition(2).unvisited_rows(), unvisited);
}

#[test]
fn missing_barrier_loses_counts() {
    let spec = two_factor(10, 10.0 / 365.0);
    let grids = layer_grids(&spec, &unit_grid(2, 10, 5)).unwrap();
    let m = 50_000;
    let mut violations = 0;
    for trial in 0..20 {
        let streams = PathStreams::new(StreamFactory::new(EngineKind::Lcg48, trial), 64).unwrap();
        let totals = count_unsynchronized(&spec, &grids, m, &streams, 4, false).unwrap();
        if totals.iter().any(|&t| t != m as u64) {
            violations += 1;
        }
        let synced = count_unsynchronized(&spec, &grids, m, &streams, 4, true).unwrap();
        assert!(synced.iter().all(|&t| t == m as u64));
    }
    assert!(violations >= 1);
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(24) })]

    #[test]
    fn rows_are_stochastic_and_mass_is_kept(
        seed in 0u64..1_000_000,
        m in 1usize..400,
        n in 1usize..8,
        steps in 1usize..6,
        kind in 1u8..=3,
    ) {
        let spec = two_factor(steps, steps as f64 / 52.0);
        let grids = layer_grids(&spec, &unit_grid(2, n, seed)).unwrap();
        let tree = estimate(kind, &spec, &grids, m, StreamFactory::new(EngineKind::Xorwow, seed), 3);
        prop_assert!(tree.max_row_deviation() <= 1e-12);
        prop_assert!(tree.check_mass().is_ok());
    }
}
