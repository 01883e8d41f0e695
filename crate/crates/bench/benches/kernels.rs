use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use mzlab::kernels::{heat_kernel, phi_kernel};
use mzlab::manifolds::eigen_system;
use mzlab::mzanalysis::{equispaced_circle, mz_constants_p2};
use mzlab::polynomials::random_polynomial;
use mzlab::{Manifold, Point};

fn kernels(c: &mut Criterion) {
    let sphere = Manifold::sphere();
    let b = eigen_system(&sphere, 16.0).unwrap();
    let x = Point::sphere(0.3, 1.1);
    let y = Point::sphere(0.9, 2.0);
    c.bench_function("phi_kernel sphere L=16", |bench| bench.iter(|| phi_kernel(&b, 16.0, black_box(&x), black_box(&y)).unwrap()));
    c.bench_function("heat_kernel sphere t=0.05", |bench| bench.iter(|| heat_kernel(&b, 0.05, black_box(&x), black_box(&y), 1e-10).unwrap()));

    let circle = Manifold::circle();
    let cb = Arc::new(eigen_system(&circle, 64.0).unwrap());
    let p = random_polynomial(cb.clone(), 64.0, 7).unwrap();
    c.bench_function("polynomial eval circle L=64", |bench| bench.iter(|| p.eval(black_box(&Point::circle(1.234)))));
    let nu = equispaced_circle(257, 0.0);
    c.bench_function("mz_constants_p2 circle L=64", |bench| bench.iter(|| mz_constants_p2(black_box(&nu), &cb, 64.0).unwrap()));
}

criterion_group!(benches, kernels);
criterion_main!(benches);
