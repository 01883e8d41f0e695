//! The acceptance battery: twelve end-to-end checks with runtime budgets,
//! shared by the test suite and the `verify-all` command.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{MzError, Result};
use crate::kernels::{localization_report, sigma_op, LocalizationOptions};
use crate::manifolds::{eigen_system, Manifold, ManifoldKind, Point, ReferenceQuadrature, SpectralBasis};
use crate::measures::SignedMeasure;
use crate::mzanalysis::{characterization_roundtrip, equispaced_circle, mz_constants_p2, sup_norm_gap_of, verify_strong_mz};
use crate::partition::{build_mz_partition, Partition, PartitionOptions};
use crate::pointsets::{fibonacci_sphere, jittered_circle};
use crate::polynomials::{bernstein_ratio, christoffel, ls_slope, product_leakage, random_polynomial, DiffusionPolynomial};
use crate::quadrature::{solve_positive_quadrature, SolveMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    /// Wall-clock budget in seconds, when the check has one.
    pub budget: Option<f64>,
}

pub const CRITERIA: [(u32, &str, Option<f64>); 12] = [
    (1, "exact MZ at p = 2", Some(1.0)),
    (2, "positive quadrature existence", Some(5.0)),
    (3, "kernel localization", Some(10.0)),
    (4, "sigma reproduction", None),
    (5, "product closure", None),
    (6, "partition invariants", Some(30.0)),
    (7, "Bernstein sharpness", None),
    (8, "strong MZ scaling", None),
    (9, "Christoffel function", None),
    (10, "characterization round trip", None),
    (11, "sup-norm gap closed form", None),
    (12, "negative control", None),
];

fn circle_basis(level: f64) -> Result<Arc<SpectralBasis>> {
    Ok(Arc::new(eigen_system(&Manifold::circle(), level)?))
}

fn check(ok: bool, detail: String) -> Result<(bool, String)> {
    Ok((ok, detail))
}

fn exact_mz() -> Result<(bool, String)> {
    let b = eigen_system(&Manifold::circle(), 32.0)?;
    let r = mz_constants_p2(&equispaced_circle(65, 0.0), &b, 32.0)?;
    check((r.c1 - 1.0).abs() <= 1e-10 && (r.c2 - 1.0).abs() <= 1e-10, format!("c1 = {:.3e} - 1, c2 = {:.3e} - 1", r.c1 - 1.0, r.c2 - 1.0))
}

fn quadrature_existence() -> Result<(bool, String)> {
    let level = 8.0;
    let n = 32;
    let m = Manifold::circle();
    let nu = SignedMeasure::equal_atoms(m.kind, &jittered_circle(n, 0.3, 7).points, 1.0);
    let opts = PartitionOptions {
        relax_d: true,
        ..Default::default()
    };
    let part = build_mz_partition(&nu, TAU / n as f64, &m.grid(1e-3), opts)?;
    let b = eigen_system(&m, level)?;
    let rule = solve_positive_quadrature(&nu, &part, &b, level, SolveMode::LpMaximin)?;
    let tau = rule.as_measure();
    let bb = Arc::new(b);
    let reference = ReferenceQuadrature::for_level(&m, level)?;
    let mut worst: f64 = 0.0;
    for s in 0..50 {
        let p = random_polynomial(bb.clone(), level, 1000 + s)?;
        let want = reference.integrate(|x| p.eval(x));
        let got: f64 = match &tau {
            SignedMeasure::Atomic { atoms, .. } => atoms.iter().map(|(x, w)| w * p.eval(x)).sum(),
            _ => unreachable!("rules are atomic"),
        };
        worst = worst.max((got - want).abs());
    }
    let nonneg = rule.weights.iter().all(|w| *w >= 0.0);
    check(
        rule.residual <= 1e-8 && rule.min_weight_ratio >= 0.05 && nonneg && worst <= 1e-8,
        format!("{} cells, residual {:.2e}, min_weight_ratio {:.3}, exactness error {:.2e}", part.len(), rule.residual, rule.min_weight_ratio, worst),
    )
}

fn kernel_localization() -> Result<(bool, String)> {
    let b = eigen_system(&Manifold::circle(), 128.0)?;
    let opts = LocalizationOptions {
        levels: vec![16.0, 32.0, 64.0, 128.0],
        s_values: vec![5],
        ..Default::default()
    };
    let r = localization_report(&b, &opts)?;
    let c: Vec<f64> = r.rows[..3].iter().map(|row| row.c_s[0].c).collect();
    let stab = c.iter().copied().fold(0.0, f64::max) / c.iter().copied().fold(f64::INFINITY, f64::min);
    let l1 = r.l1_ratio();
    check(stab <= 2.0 && l1 <= 1.1, format!("c(5) = {c:.4?} (ratio {stab:.3}), L1 ratio {l1:.4}"))
}

fn sigma_reproduction() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for level in [8.0, 32.0] {
        let b = circle_basis(2.0 * level)?;
        let rule = ReferenceQuadrature::for_level(&Manifold::circle(), 2.0 * level)?;
        for s in 0..50 {
            let p = random_polynomial(b.clone(), level, s)?;
            let f: Vec<f64> = rule.nodes.iter().map(|x| p.eval(x)).collect();
            let sp = sigma_op(b.clone(), 2.0 * level, &rule, &f)?;
            let mut diff = sp.coeffs.clone();
            diff.iter_mut().zip(&p.coeffs).for_each(|(a, c)| *a -= c);
            worst = worst.max(diff.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
    }
    check(worst <= 1e-10, format!("max ||sigma_2L(P) - P||_2 = {worst:.2e}"))
}

fn product_closure() -> Result<(bool, String)> {
    let b = circle_basis(16.0)?;
    let mut circle: f64 = 0.0;
    for i in 0..100 {
        let q = random_polynomial(b.clone(), 16.0, 2 * i)?;
        let r = random_polynomial(b.clone(), 16.0, 2 * i + 1)?;
        circle = circle.max(product_leakage(&q, &r, 2.0)?.l2);
    }
    let s = Arc::new(eigen_system(&Manifold::sphere(), 3.0)?);
    let mut sphere: f64 = 0.0;
    for i in 0..20 {
        let q = random_polynomial(s.clone(), 3.0, 500 + 2 * i)?;
        let r = random_polynomial(s.clone(), 3.0, 501 + 2 * i)?;
        sphere = sphere.max(product_leakage(&q, &r, 2.0)?.l2);
    }
    check(circle <= 1e-12 && sphere <= 1e-10, format!("circle leakage {circle:.2e}, sphere leakage {sphere:.2e}"))
}

fn audit_one(nu: &SignedMeasure, d: f64) -> Result<(bool, String)> {
    let m = nu.manifold();
    let probe = m.grid_with_count(10_000).points;
    let part = build_mz_partition(nu, d, &probe, PartitionOptions::default())?;
    let a = part.run_audit(nu, &probe)?;
    let band = a.band.1 / a.band.0;
    let ok = a.containment_ratio <= 81.0 && band <= 100.0 && a.min_nu_mass > 0.0;
    Ok((ok, format!("{}: {} cells, containment {:.2} d, band ratio {:.2}, min |nu| mass {:.2e}", m.kind, part.len(), a.containment_ratio, band, a.min_nu_mass)))
}

fn partition_invariants() -> Result<(bool, String)> {
    let circle = SignedMeasure::equal_atoms(ManifoldKind::Circle, &jittered_circle(20_000, 0.3, 5).points, 1.0);
    let (ok1, d1) = audit_one(&circle, 0.01)?;
    let sphere = SignedMeasure::equal_atoms(ManifoldKind::Sphere2, &fibonacci_sphere(60_000).points, 1.0);
    let (ok2, d2) = audit_one(&sphere, 1.0 / 81.0)?;
    check(ok1 && ok2, format!("{d1}; {d2}"))
}

fn bernstein() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for level in [8.0, 16.0, 32.0] {
        let r = bernstein_ratio(circle_basis(level)?, level, 200, 31)?;
        ok &= r.max_ratio >= 1.0 - 1e-9 && r.max_ratio <= 1.0 + 1e-6;
        parts.push(format!("L={level}: {:.12}", r.max_ratio));
    }
    check(ok, parts.join(", "))
}

/// Strong-MZ families `L = 10`, `d` halving from `0.01`, with `ceil(2 pi/d)`
/// atoms jittered by `0.3` of a gap.
fn strong_mz_scaling() -> Result<(bool, String)> {
    let level = 10.0;
    let b = circle_basis(level)?;
    let m = Manifold::circle();
    let ds = [0.01, 0.005, 0.0025];
    let mut ok = true;
    let mut parts = Vec::new();
    let mut families = Vec::new();
    for (i, &d) in ds.iter().enumerate() {
        let n = (TAU / d).ceil() as usize;
        let nu = SignedMeasure::equal_atoms(m.kind, &jittered_circle(n, 0.3, 40 + i as u64).points, 1.0);
        let part = build_mz_partition(&nu, d, &m.grid(d / 10.0), PartitionOptions::default())?;
        families.push((nu, part));
    }
    for p in [1.0, 2.0] {
        let mut eta = Vec::new();
        for (nu, part) in &families {
            eta.push(verify_strong_mz(nu, part, b.clone(), level, p, 20, 9)?.eta_cells);
        }
        let decreasing = eta.windows(2).all(|w| w[1] < w[0]);
        let x: Vec<f64> = ds.iter().map(|d| (level * d).ln()).collect();
        let y: Vec<f64> = eta.iter().map(|e| e.ln()).collect();
        let slope = ls_slope(&x, &y);
        ok &= decreasing && (slope - 1.0).abs() <= 0.3;
        parts.push(format!("p={p}: eta {:?}, slope {slope:.3}", eta.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>()));
    }
    check(ok, parts.join("; "))
}

fn christoffel_check() -> Result<(bool, String)> {
    let b = eigen_system(&Manifold::circle(), 64.0)?;
    let mut worst: f64 = 0.0;
    for l in 1..=64 {
        let level = l as f64;
        for k in 0..8 {
            let x = Point::circle(0.37 + 0.81 * k as f64);
            worst = worst.max((christoffel(&b, level, &x)? - (2 * l + 1) as f64).abs());
        }
    }
    let s = eigen_system(&Manifold::sphere(), 6.0)?;
    let m = Manifold::sphere();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(12);
    let vals: Vec<f64> = (0..50).map(|_| christoffel(&s, 6.0, &m.random_point(&mut rng))).collect::<Result<_>>()?;
    let spread = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max) - vals.iter().copied().fold(f64::INFINITY, f64::min);
    check(worst <= 1e-9 && spread <= 1e-8, format!("circle max |K - (2L+1)| = {worst:.2e}; sphere spread {spread:.2e} at value {:.6}", vals[0]))
}

fn characterization() -> Result<(bool, String)> {
    let b = circle_basis(8.0)?;
    let r = characterization_roundtrip(&SignedMeasure::uniform(ManifoldKind::Circle), b.clone(), 8.0, 2.0, 10, 1)?;
    let four = [r.r_rel, r.d_rel, r.c1, r.c2];
    let in_band = four.iter().all(|v| (0.99..=1.01).contains(v));
    let base = equispaced_circle(64, 0.0);
    let mut atoms = match &base {
        SignedMeasure::Atomic { atoms, .. } => atoms.clone(),
        _ => unreachable!("equispaced measures are atomic"),
    };
    atoms[5].1 *= 2.0;
    let bumped = SignedMeasure::atomic(ManifoldKind::Circle, atoms);
    let r0 = characterization_roundtrip(&base, b.clone(), 8.0, 2.0, 10, 1)?;
    let r1 = characterization_roundtrip(&bumped, b, 8.0, 2.0, 10, 1)?;
    let dr = r1.r_rel - r0.r_rel;
    let dc = r1.c2 - r0.c2;
    let agree = dr != 0.0 && dr.signum() == dc.signum();
    check(in_band && agree, format!("uniform (R, D, c1, c2) = {four:.5?}; doubled atom dR {dr:+.3e}, dc2 {dc:+.3e}"))
}

fn sup_gap() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (l, n) in [(8usize, 64usize), (16, 64)] {
        let b = circle_basis(l as f64)?;
        let nu = equispaced_circle(n, PI / n as f64);
        let p = DiffusionPolynomial::basis_function(b, l as f64, 2 * l - 1)?;
        let gap = sup_norm_gap_of(&nu, &p)?;
        worst = worst.max((gap - (1.0 - (l as f64 * PI / n as f64).cos())).abs());
    }
    check(worst <= 1e-9, format!("max deviation from 1 - cos(L pi/N): {worst:.2e}"))
}

fn negative_control() -> Result<(bool, String)> {
    let n = 40;
    let pts: Vec<Point> = (0..n).map(|k| Point::circle(0.05 + (PI - 0.1) * k as f64 / (n - 1) as f64)).collect();
    let nu = SignedMeasure::equal_atoms(ManifoldKind::Circle, &pts, 1.0);
    let level = 4.0;
    let b = circle_basis(level)?;
    let ch = characterization_roundtrip(&nu, b.clone(), level, 2.0, 10, 1)?;
    let mz = mz_constants_p2(&nu, &b, level)?;
    let part = Partition::single_stage(&nu, pts, 1e-3)?;
    let quad = match solve_positive_quadrature(&nu, &part, &b, level, SolveMode::LpMaximin) {
        Err(MzError::Infeasible { residual, .. }) => (true, format!("LP infeasible (phase-one residual {residual:.3e})")),
        Ok(rule) => (rule.residual > 1e-3, format!("LP residual {:.3e}", rule.residual)),
        Err(e) => return Err(e),
    };
    check(
        ch.dominance_infinite && mz.c1 <= 1e-3 && quad.0,
        format!("dominance infinite: {}, c1 = {:.2e}, {}", ch.dominance_infinite, mz.c1, quad.1),
    )
}

/// Runs criterion `id` (1 to 12).
pub fn run_criterion(id: u32) -> CriterionResult {
    let (_, name, budget) = CRITERIA.iter().find(|c| c.0 == id).copied().unwrap_or((id, "unknown", None));
    let start = Instant::now();
    let out = match id {
        1 => exact_mz(),
        2 => quadrature_existence(),
        3 => kernel_localization(),
        4 => sigma_reproduction(),
        5 => product_closure(),
        6 => partition_invariants(),
        7 => bernstein(),
        8 => strong_mz_scaling(),
        9 => christoffel_check(),
        10 => characterization(),
        11 => sup_gap(),
        12 => negative_control(),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (mut passed, mut detail) = out.unwrap_or_else(|e| (false, format!("error: {e}")));
    if let Some(limit) = budget {
        if seconds > limit {
            passed = false;
            detail.push_str(&format!("; over budget ({seconds:.2} s > {limit} s)"));
        }
    }
    CriterionResult {
        id,
        name: name.to_string(),
        passed,
        detail,
        seconds,
        budget,
    }
}

pub fn run_all() -> Vec<CriterionResult> {
    CRITERIA.iter().map(|c| run_criterion(c.0)).collect()
}

impl CriterionResult {
    /// One summary line: `[PASS] 3 kernel localization (1.20 s): ...`.
    pub fn line(&self) -> String {
        format!("[{}] {:>2} {} ({:.2} s): {}", if self.passed { "PASS" } else { "FAIL" }, self.id, self.name, self.seconds, self.detail)
    }
}
