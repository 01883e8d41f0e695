use std::f64::consts::TAU;
use std::sync::Arc;

use mzlab::manifolds::eigen_system;
use mzlab::measures::{SignedMeasure, WeightFunction};
use mzlab::mzanalysis::{mz_constants_p2, verify_strong_mz};
use mzlab::partition::{build_mz_partition, Partition, PartitionOptions};
use mzlab::pointsets::jittered_circle;
use mzlab::quadrature::{quadrature_residual, solve_positive_quadrature, verify_quadrature_mz, SolveMode};
use mzlab::{Manifold, ManifoldKind, MzError};

#[test]
fn density_measure_to_quadrature() {
    let m = Manifold::circle();
    let nu = SignedMeasure::Density {
        kind: m.kind,
        weight: WeightFunction::Jump { low: 0.5, high: 1.5 },
    };
    let part = build_mz_partition(&nu, 0.01, &m.grid(1e-3), PartitionOptions::default()).unwrap();
    let b = eigen_system(&m, 4.0).unwrap();
    let rule = solve_positive_quadrature(&nu, &part, &b, 4.0, SolveMode::LpMaximin).unwrap();
    assert!(rule.residual <= 1e-9);
    assert!(rule.warning.is_none());
    assert!(rule.weights.iter().all(|w| *w >= 0.0));
    assert!(quadrature_residual(&rule, &b, 4.0).unwrap() <= 1e-9);
    let mz = mz_constants_p2(&nu, &b, 4.0).unwrap();
    assert!(mz.c1 >= 0.5 - 1e-6 && mz.c2 <= 1.5 + 1e-6, "{mz:?}");
}

#[test]
fn partition_dump_roundtrip_preserves_labels() {
    let m = Manifold::circle();
    let nu = SignedMeasure::equal_atoms(m.kind, &jittered_circle(2000, 0.3, 3).points, 1.0);
    let part = build_mz_partition(&nu, 0.01, &m.grid(1e-3), PartitionOptions::default()).unwrap();
    let back = Partition::from_json(&part.to_json()).unwrap();
    let probe = m.grid(2e-3);
    for p in &probe {
        assert_eq!(part.cell_of(p), back.cell_of(p));
    }
    let b = Arc::new(eigen_system(&m, 10.0).unwrap());
    let a = verify_strong_mz(&nu, &part, b.clone(), 10.0, 2.0, 5, 1).unwrap();
    let c = verify_strong_mz(&nu, &back, b, 10.0, 2.0, 5, 1).unwrap();
    assert_eq!(a, c);
}

#[test]
fn torus_and_sphere_rules() {
    for m in [Manifold::torus(), Manifold::sphere()] {
        let nu = SignedMeasure::uniform(m.kind);
        let opts = PartitionOptions {
            relax_d: true,
            mass_fraction: 0.25,
        };
        let part = build_mz_partition(&nu, 0.15, &m.grid(0.03), opts).unwrap();
        let b = eigen_system(&m, 2.0).unwrap();
        let rule = solve_positive_quadrature(&nu, &part, &b, 2.0, SolveMode::LpMaximin).unwrap();
        assert!(rule.residual <= 1e-9, "{}: {}", m.kind, rule.residual);
        assert!(rule.min_weight_ratio > 0.0);
    }
}

#[test]
fn order_shortfall_is_reported() {
    let m = Manifold::circle();
    let nu = SignedMeasure::equal_atoms(m.kind, &jittered_circle(64, 0.2, 1).points, 1.0);
    let part = build_mz_partition(&nu, TAU / 64.0, &m.grid(1e-3), PartitionOptions { relax_d: true, ..Default::default() }).unwrap();
    let b = Arc::new(eigen_system(&m, 16.0).unwrap());
    let rule = solve_positive_quadrature(&nu, &part, &b, 8.0, SolveMode::LpMaximin).unwrap();
    assert!(matches!(verify_quadrature_mz(&rule, b, 8.0, 2.0, 3, 1, 2.0), Err(MzError::InsufficientQuadrature { .. })));
    assert_eq!(rule.manifold, ManifoldKind::Circle);
}
