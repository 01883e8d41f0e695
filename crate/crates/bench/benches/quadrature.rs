use std::f64::consts::TAU;

use criterion::{criterion_group, criterion_main, Criterion};

use mzlab::manifolds::eigen_system;
use mzlab::measures::SignedMeasure;
use mzlab::partition::{build_mz_partition, PartitionOptions};
use mzlab::pointsets::jittered_circle;
use mzlab::quadrature::{solve_on_cells, solve_positive_quadrature, RuleCell, SolveMode};
use mzlab::Manifold;

fn quadrature(c: &mut Criterion) {
    let m = Manifold::circle();
    let b = eigen_system(&m, 32.0).unwrap();
    let n = 129;
    let cells: Vec<RuleCell> = jittered_circle(n, 0.3, 5).points.iter().map(|p| RuleCell { nodes: vec![(*p, 1.0)], mu_mass: 1.0 / n as f64 }).collect();
    let mut g = c.benchmark_group("solve_on_cells circle L=32");
    g.sample_size(20);
    for mode in [SolveMode::LpMaximin, SolveMode::Nnls] {
        g.bench_function(format!("{mode:?}"), |bench| bench.iter(|| solve_on_cells(cells.clone(), TAU / n as f64, &b, 32.0, mode)));
    }
    g.finish();

    let nu = SignedMeasure::equal_atoms(m.kind, &jittered_circle(2000, 0.3, 3).points, 1.0);
    let probe = m.grid(1e-3);
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    g.bench_function("partition circle d=0.01", |bench| bench.iter(|| build_mz_partition(&nu, 0.01, &probe, PartitionOptions::default()).unwrap()));
    let part = build_mz_partition(&nu, 0.01, &probe, PartitionOptions::default()).unwrap();
    let b8 = eigen_system(&m, 8.0).unwrap();
    g.bench_function("positive rule circle L=8", |bench| bench.iter(|| solve_positive_quadrature(&nu, &part, &b8, 8.0, SolveMode::LpMaximin).unwrap()));
    g.finish();
}

criterion_group!(benches, quadrature);
criterion_main!(benches);
