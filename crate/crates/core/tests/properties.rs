use std::f64::consts::TAU;
use std::sync::Arc;

use proptest::prelude::*;

use mzlab::io::{measure_from_json, measure_to_json};
use mzlab::kernels::cutoff_h;
use mzlab::manifolds::{eigen_system, ReferenceQuadrature};
use mzlab::measures::SignedMeasure;
use mzlab::mzanalysis::{equispaced_circle, mz_constants_p2, sup_norm_gap_of};
use mzlab::partition::{merge_partition, BaseCells, TauAtoms};
use mzlab::pointsets::{jittered_circle, max_separated_subset, PointSet};
use mzlab::polynomials::{norm_p, random_polynomial, DiffusionPolynomial, NormMeasure};
use mzlab::quadrature::{read_rule, solve_on_cells, write_rule, RuleCell, SolveMode};
use mzlab::{Manifold, ManifoldKind, Point};

fn kind_strategy() -> impl Strategy<Value = Manifold> {
    prop_oneof![Just(Manifold::circle()), Just(Manifold::sphere()), Just(Manifold::torus())]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parseval_matches_reference_rule(m in kind_strategy(), level in 1u32..7, seed in any::<u64>()) {
        let level = level as f64;
        let b = Arc::new(eigen_system(&m, level).unwrap());
        let p = random_polynomial(b, level, seed).unwrap();
        let rule = ReferenceQuadrature::for_level(&m, level).unwrap();
        let quad = rule.integrate(|x| p.eval(x).powi(2)).sqrt();
        prop_assert!((quad - p.l2_norm()).abs() <= 1e-10 * p.l2_norm().max(1.0));
    }

    #[test]
    fn norms_increase_with_p(level in 1u32..12, seed in any::<u64>()) {
        let level = level as f64;
        let b = Arc::new(eigen_system(&Manifold::circle(), level).unwrap());
        let p = random_polynomial(b, level, seed).unwrap();
        let n: Vec<f64> = [1.0, 2.0, 4.0, f64::INFINITY].iter().map(|&e| norm_p(&p, NormMeasure::Mu, e).unwrap()).collect();
        for w in n.windows(2) {
            prop_assert!(w[0] <= w[1] * (1.0 + 1e-9), "{n:?}");
        }
    }

    #[test]
    fn duplicates_do_not_change_separated_subset(n in 5usize..200, seed in any::<u64>(), eps in 0.01f64..0.5) {
        let base = jittered_circle(n, 0.3, seed);
        let a = max_separated_subset(&base, eps).unwrap();
        let mut pts = base.points.clone();
        pts.extend(base.points.iter().rev().copied());
        let b = max_separated_subset(&PointSet::new(ManifoldKind::Circle, pts).unwrap(), eps).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn merge_preserves_tau_mass(n in 20usize..120, seed in any::<u64>()) {
        let centers = jittered_circle(n, 0.2, seed).points;
        let gap = TAU / n as f64;
        let base = BaseCells::new(ManifoldKind::Circle, centers.clone(), gap);
        let atoms = jittered_circle(4 * n, 0.4, seed ^ 0x5a5a).points;
        let masses: Vec<f64> = (0..atoms.len()).map(|i| 1.0 + (i % 3) as f64).collect();
        let labels: Vec<usize> = atoms.iter().map(|p| base.cell_of(p).unwrap()).collect();
        let tau = TauAtoms { points: &atoms, masses: &masses, labels: &labels };
        let stage = merge_partition(ManifoldKind::Circle, &centers, &tau, gap, gap, "test").unwrap();
        let mut merged = vec![0.0; stage.kept.len()];
        for (&l, &w) in labels.iter().zip(&masses) {
            merged[stage.phi[l]] += w;
        }
        let total: f64 = masses.iter().sum();
        prop_assert!((merged.iter().sum::<f64>() - total).abs() <= 1e-9 * total);
        prop_assert!(merged.iter().all(|&v| v >= stage.threshold_c * stage.min_ball_mass * (1.0 - 1e-12)));
    }

    #[test]
    fn equispaced_measures_are_exact_mz(level in 1u32..20, extra in 0usize..10, phase in 0.0f64..TAU) {
        let level = level as f64;
        let n = 2 * level as usize + 1 + extra;
        let b = eigen_system(&Manifold::circle(), level).unwrap();
        let r = mz_constants_p2(&equispaced_circle(n, phase), &b, level).unwrap();
        prop_assert!((r.c1 - 1.0).abs() <= 1e-10 && (r.c2 - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn sup_gap_is_a_fraction(level in 1u32..10, n in 3usize..60, seed in any::<u64>()) {
        let level = level as f64;
        let b = Arc::new(eigen_system(&Manifold::circle(), level).unwrap());
        let p = random_polynomial(b.clone(), level, seed).unwrap();
        let g = sup_norm_gap_of(&equispaced_circle(n, 0.1), &p).unwrap();
        prop_assert!((-1e-9..=1.0).contains(&g));
        let one = DiffusionPolynomial::basis_function(b, level, 0).unwrap();
        prop_assert_eq!(sup_norm_gap_of(&equispaced_circle(n, 0.1), &one).unwrap(), 0.0);
    }

    #[test]
    fn positive_rules_hold_moments(level in 1u32..6, seed in any::<u64>()) {
        let level = level as f64;
        let n = 4 * level as usize + 4;
        let b = eigen_system(&Manifold::circle(), level).unwrap();
        let cells: Vec<RuleCell> = jittered_circle(n, 0.3, seed).points.iter().map(|p| RuleCell { nodes: vec![(*p, 1.0)], mu_mass: 1.0 / n as f64 }).collect();
        let lp = solve_on_cells(cells.clone(), TAU / n as f64, &b, level, SolveMode::LpMaximin).unwrap();
        prop_assert!(lp.residual <= 1e-9 && lp.weights.iter().all(|&w| w >= 0.0));
        if let Ok(nn) = solve_on_cells(cells, TAU / n as f64, &b, level, SolveMode::Nnls) {
            prop_assert!(nn.weights.iter().all(|&w| w >= 0.0));
            prop_assert!(lp.min_weight_ratio >= nn.min_weight_ratio - 1e-9);
        }
        let (tau, l, _) = read_rule(&write_rule(&lp)).unwrap();
        prop_assert_eq!(l, level);
        prop_assert_eq!(tau, lp.as_measure());
    }

    #[test]
    fn cutoff_shape(t in -2.0f64..2.0, s in 0.0f64..2.0) {
        let h = cutoff_h(t);
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert_eq!(h, cutoff_h(-t));
        if t.abs() <= 0.5 { prop_assert_eq!(h, 1.0); }
        if t.abs() >= 1.0 { prop_assert_eq!(h, 0.0); }
        let (a, b) = if t.abs() <= s { (t.abs(), s) } else { (s, t.abs()) };
        prop_assert!(cutoff_h(b) <= cutoff_h(a) + 1e-15);
    }

    #[test]
    fn measure_json_roundtrip(w in proptest::collection::vec((0.0f64..TAU, -1.0f64..1.0), 1..30)) {
        let atoms: Vec<(Point, f64)> = w.iter().map(|&(t, v)| (Point::circle(t), v)).collect();
        let nu = SignedMeasure::atomic(ManifoldKind::Circle, atoms);
        prop_assert_eq!(measure_from_json(&measure_to_json(&nu)).unwrap(), nu);
    }
}
