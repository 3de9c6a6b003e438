use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use beamnet::beam::DiagonalizedBeam;
use beamnet::fixtures;
use beamnet::kinematics::*;
use beamnet::network::NetworkSpec;
use beamnet::par::Execution;
use beamnet::solver::{cfl_dt, solve_forward, SolverOptions, TimeGrid};

fn small_state(dbs: &[DiagonalizedBeam]) -> Vec<Vec<Vec12>> {
    dbs.iter()
        .enumerate()
        .map(|(b, db)| {
            (0..=db.n_cells())
                .map(|j| Vec12::from_fn(|k, _| 1e-4 * ((k + b) as f64 + 3.0 * db.x(j)).sin()))
                .collect()
        })
        .collect()
}

fn setup(nx: usize) -> (NetworkSpec, Vec<DiagonalizedBeam>, Vec<Vec<Vec12>>) {
    let net = fixtures::unit_a_network();
    let dbs = net.diagonalize_uniform(nx, Execution::Parallel).unwrap();
    let y0 = small_state(&dbs);
    (net, dbs, y0)
}

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_a_network");
    group.sample_size(10);
    for nx in [100, 400] {
        let (net, dbs, y0) = setup(nx);
        let grid = TimeGrid::for_horizon(1.0, cfl_dt(&dbs, 0.9));
        for (name, execution) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            let opts = SolverOptions { execution, strict_compat: false, ..Default::default() };
            group.bench_with_input(BenchmarkId::new(name, nx), &nx, |b, _| {
                b.iter(|| solve_forward(&net, &dbs, &y0, &grid, &opts, None).unwrap())
            });
        }
    }
    group.finish();
}

fn diagonalization(c: &mut Criterion) {
    let mut group = c.benchmark_group("diagonalize_a_network");
    group.sample_size(10);
    let net = fixtures::unit_a_network();
    for (name, execution) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_function(name, |b| b.iter(|| net.diagonalize_uniform(400, execution).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, forward, diagonalization);
criterion_main!(benches);
