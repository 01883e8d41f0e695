//! Positive quadrature over partition-cell functionals, moment residuals,
//! MZ verification of quadrature measures and the rule file format.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, MzError, Result};
use crate::lp::{self, LpOutcome};
use crate::manifolds::{level_degree, Manifold, ManifoldKind, Point, ReferenceQuadrature, SpectralBasis};
use crate::measures::SignedMeasure;
use crate::mzanalysis::{mz_constants_p2, mz_ratio_bounds, MZReport};
use crate::nnls::nnls;
use crate::partition::Partition;
use crate::polynomials::{random_polynomial, DiffusionPolynomial};

/// `int phi_j dmu` for `ell_j <= L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub values: Vec<f64>,
}

/// The moment vector `(1, 0, 0, ...)`.
pub fn moments(basis: &SpectralBasis, level: f64) -> Result<MomentVector> {
    basis.require_level(level)?;
    let mut values = vec![0.0; basis.dim(level)];
    values[0] = 1.0;
    Ok(MomentVector { values })
}

/// Largest deviation between the analytic moments and the reference rule.
pub fn moments_crosscheck(basis: &SpectralBasis, level: f64) -> Result<f64> {
    let mv = moments(basis, level)?;
    let rule = ReferenceQuadrature::exact_to(&Manifold::new(basis.kind), level_degree(basis.kind, level));
    let n = mv.values.len();
    let mut acc = vec![0.0; n];
    let mut buf = Vec::new();
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        basis.eval_into(x, n, &mut buf);
        acc.iter_mut().zip(&buf).for_each(|(a, v)| *a += w * v);
    }
    Ok(acc.iter().zip(&mv.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    PointEvaluation,
    /// `x_k^*(f) = (1/|nu|(Y_k)) int_{Y_k} f d|nu|`.
    CellAverage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveMode {
    #[serde(rename = "LP_maximin")]
    LpMaximin,
    #[serde(rename = "NNLS")]
    Nnls,
}

/// Residual below which an NNLS solution is accepted.
pub const NNLS_TOLERANCE: f64 = 1e-8;

/// One functional: its nodes with normalized weights summing to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleCell {
    pub nodes: Vec<(Point, f64)>,
    pub mu_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub manifold: ManifoldKind,
    #[serde(rename = "L")]
    pub level: f64,
    pub kind: FunctionalKind,
    pub mode: Option<SolveMode>,
    pub cells: Vec<RuleCell>,
    pub weights: Vec<f64>,
    pub residual: f64,
    pub min_weight_ratio: f64,
    /// Maximin value `t` for LP solves.
    pub t: Option<f64>,
    /// Set when `L d` lies outside the range where existence is expected.
    pub warning: Option<String>,
}

impl QuadratureRule {
    /// Point-evaluation rule `sum_k W_k f(x_k)`; `mu_masses` feed the
    /// weight ratio (pass `1/N` each when unknown).
    pub fn point_evaluation(kind: ManifoldKind, level: f64, points: &[Point], weights: Vec<f64>, mu_masses: &[f64]) -> Result<Self> {
        if points.len() != weights.len() || points.len() != mu_masses.len() {
            return Err(MzError::DimensionMismatch(format!("{} points, {} weights", points.len(), weights.len())));
        }
        let cells = points
            .iter()
            .zip(mu_masses)
            .map(|(p, &mu_mass)| RuleCell { nodes: vec![(*p, 1.0)], mu_mass })
            .collect();
        let mut r = QuadratureRule {
            manifold: kind,
            level,
            kind: FunctionalKind::PointEvaluation,
            mode: None,
            cells,
            weights,
            residual: 0.0,
            min_weight_ratio: 0.0,
            t: None,
            warning: None,
        };
        r.min_weight_ratio = r.weight_ratio();
        Ok(r)
    }

    fn weight_ratio(&self) -> f64 {
        self.weights.iter().zip(&self.cells).map(|(w, c)| w / c.mu_mass).fold(f64::INFINITY, f64::min)
    }

    /// The rule as an atomic measure: each node carries `W_k` times its
    /// normalized weight.
    pub fn as_measure(&self) -> SignedMeasure {
        let atoms = self
            .cells
            .iter()
            .zip(&self.weights)
            .flat_map(|(c, &w)| c.nodes.iter().map(move |(p, q)| (*p, w * q)))
            .collect();
        SignedMeasure::atomic(self.manifold, atoms)
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Functional matrix `A[j][k] = x_k^*(phi_j)` for `j < n`.
fn functional_matrix(basis: &SpectralBasis, cells: &[RuleCell], n: usize) -> Vec<Vec<f64>> {
    use rayon::prelude::*;
    let cols: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|c| {
            let mut acc = vec![0.0; n];
            let mut buf = Vec::new();
            for (p, q) in &c.nodes {
                basis.eval_into(p, n, &mut buf);
                acc.iter_mut().zip(&buf).for_each(|(a, v)| *a += q * v);
            }
            acc
        })
        .collect();
    (0..n).map(|j| cols.iter().map(|c| c[j]).collect()).collect()
}

fn moment_residual(a: &[Vec<f64>], w: &[f64]) -> f64 {
    a.iter()
        .enumerate()
        .map(|(j, row)| {
            let s: f64 = row.iter().zip(w).map(|(x, y)| x * y).sum();
            (s - if j == 0 { 1.0 } else { 0.0 }).abs()
        })
        .fold(0.0, f64::max)
}

/// Cell-average functionals of `|nu|` over the cells of `partition`.
pub fn cell_functionals(nu: &SignedMeasure, partition: &Partition) -> Result<Vec<RuleCell>> {
    let (pts, w, labels) = partition.nu_atoms(nu)?;
    let n = partition.len();
    let mut cells: Vec<RuleCell> = partition.cells.iter().map(|c| RuleCell { nodes: Vec::new(), mu_mass: c.mu_mass }).collect();
    let mut mass = vec![0.0; n];
    for ((p, &q), &l) in pts.iter().zip(&w).zip(&labels) {
        if q > 0.0 {
            cells[l].nodes.push((*p, q));
            mass[l] += q;
        }
    }
    for (k, c) in cells.iter_mut().enumerate() {
        if !(mass[k] > 0.0) {
            return Err(MzError::InvariantViolated(format!("cell {k} has no |nu| mass")));
        }
        c.nodes.iter_mut().for_each(|n| n.1 /= mass[k]);
    }
    Ok(cells)
}

/// Finds `W >= 0` with `sum_k W_k x_k^*(phi_j) = delta_{j0}` for `ell_j <= L`.
pub fn solve_positive_quadrature(nu: &SignedMeasure, partition: &Partition, basis: &SpectralBasis, level: f64, mode: SolveMode) -> Result<QuadratureRule> {
    if !(level >= 1.0) {
        return Err(MzError::InvalidLevel(level));
    }
    basis.require_level(level)?;
    if basis.kind != partition.kind {
        return Err(MzError::ManifoldMismatch {
            expected: partition.kind.to_string(),
            found: basis.kind.to_string(),
        });
    }
    let cells = cell_functionals(nu, partition)?;
    match solve_on_cells(cells, partition.d, basis, level, mode) {
        Err(e @ MzError::Infeasible { .. }) if level * partition.d <= VALID_SCALE => {
            // infeasible at a scale where a rule should exist: rule out a broken partition first
            let probe = partition.manifold().grid(partition.d / 2.0);
            partition.run_audit(nu, &probe)?;
            Err(e)
        }
        other => other,
    }
}

/// `L d` below which infeasibility prompts a partition audit.
pub const VALID_SCALE: f64 = 0.25;

/// [`solve_positive_quadrature`] for explicit functionals.
pub fn solve_on_cells(cells: Vec<RuleCell>, d: f64, basis: &SpectralBasis, level: f64, mode: SolveMode) -> Result<QuadratureRule> {
    let n = basis.dim(level);
    let m = cells.len();
    if m == 0 {
        return Err(MzError::EmptySupport);
    }
    let a = functional_matrix(basis, &cells, n);
    let mu: Vec<f64> = cells.iter().map(|c| c.mu_mass).collect();
    let (weights, t) = match mode {
        SolveMode::LpMaximin => {
            // W = t mu + s with s >= 0: maximize t subject to A (t mu + s) = e0
            let amu: Vec<f64> = a.iter().map(|row| row.iter().zip(&mu).map(|(x, y)| x * y).sum()).collect();
            let rows: Vec<Vec<f64>> = a.iter().zip(&amu).map(|(row, am)| row.iter().copied().chain([*am]).collect()).collect();
            let mut b = vec![0.0; n];
            b[0] = 1.0;
            let mut c = vec![0.0; m + 1];
            c[m] = -1.0;
            match lp::solve(&rows, &b, &c) {
                LpOutcome::Optimal { x, .. } => {
                    let t = x[m];
                    ((0..m).map(|k| t * mu[k] + x[k]).collect::<Vec<f64>>(), Some(t))
                }
                LpOutcome::Infeasible { residual, direction } => return Err(MzError::Infeasible { residual, direction }),
                LpOutcome::Unbounded => return Err(MzError::InvariantViolated("maximin program unbounded".into())),
            }
        }
        SolveMode::Nnls => {
            let am = DMatrix::from_fn(n, m, |j, k| a[j][k]);
            let mut b = DVector::zeros(n);
            b[0] = 1.0;
            let w = nnls(&am, &b);
            let r = moment_residual(&a, w.as_slice());
            if r > NNLS_TOLERANCE {
                let dir = (&am * &w - &b).as_slice().to_vec();
                return Err(MzError::Infeasible { residual: r, direction: dir });
            }
            (w.as_slice().to_vec(), None)
        }
    };
    let residual = moment_residual(&a, &weights);
    let warning = (level * d > 1.0).then(|| format!("L d = {} exceeds 1; existence is only expected for small L d", level * d));
    let mut rule = QuadratureRule {
        manifold: basis.kind,
        level,
        kind: FunctionalKind::CellAverage,
        mode: Some(mode),
        cells,
        weights,
        residual,
        min_weight_ratio: 0.0,
        t,
        warning,
    };
    rule.min_weight_ratio = rule.weight_ratio();
    Ok(rule)
}

/// `max_j |sum_k W_k x_k^*(phi_j) - delta_{j0}|` over `ell_j <= L_test`.
pub fn quadrature_residual(rule: &QuadratureRule, basis: &SpectralBasis, level_test: f64) -> Result<f64> {
    basis.require_level(level_test)?;
    let a = functional_matrix(basis, &rule.cells, basis.dim(level_test));
    Ok(moment_residual(&a, &rule.weights))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureMzReport {
    pub mz: MZReport,
    /// Worst `|int P1 P2 dtau - int P1 P2 dmu| / (||P1||_2 ||P2||_2)` over
    /// random pairs in `Pi_{2L}`.
    pub product_error: f64,
    pub pairs: usize,
}

/// MZ constants of a quadrature measure of order at least `2 A* L`, with
/// the product quadrature error on `Pi_{2L}`.
pub fn verify_quadrature_mz(rule: &QuadratureRule, basis: Arc<SpectralBasis>, level: f64, p: f64, trials: usize, seed: u64, astar: f64) -> Result<QuadratureMzReport> {
    let need = 2.0 * astar * level;
    if rule.level + 1e-12 < need {
        return Err(MzError::InsufficientQuadrature {
            available: level_degree(rule.manifold, rule.level),
            required: level_degree(rule.manifold, need),
        });
    }
    let tau = rule.as_measure();
    let mz = if p == 2.0 {
        mz_constants_p2(&tau, &basis, level)?
    } else {
        mz_ratio_bounds(&tau, basis.clone(), level, p, trials, seed)?
    };
    let big = if basis.level >= 2.0 * level {
        basis.clone()
    } else {
        Arc::new(crate::manifolds::eigen_system(&Manifold::new(basis.kind), 2.0 * level)?)
    };
    let pairs = trials.max(1);
    let atoms = match &tau {
        SignedMeasure::Atomic { atoms, .. } => atoms.clone(),
        _ => unreachable!("rules are atomic"),
    };
    let pts: Vec<Point> = atoms.iter().map(|a| a.0).collect();
    let mut worst: f64 = 0.0;
    for i in 0..pairs {
        let p1 = random_polynomial(big.clone(), 2.0 * level, seed.wrapping_add(2 * i as u64))?;
        let p2 = random_polynomial(big.clone(), 2.0 * level, seed.wrapping_add(2 * i as u64 + 1))?;
        let (v1, v2) = (p1.eval_many(&pts), p2.eval_many(&pts));
        let discrete: f64 = atoms.iter().zip(v1.iter().zip(&v2)).map(|(a, (x, y))| a.1 * x * y).sum();
        let exact: f64 = p1.coeffs.iter().zip(&p2.coeffs).map(|(a, b)| a * b).sum();
        worst = worst.max((discrete - exact).abs() / (p1.l2_norm() * p2.l2_norm()));
    }
    Ok(QuadratureMzReport {
        mz,
        product_error: worst,
        pairs,
    })
}

/// Commensurate `sigma_{2L}(tau; P)` error relative to `||P||_{mu;2}`,
/// measured in the sup norm on `Pi_L`.
pub fn sigma_reproduction_error(rule: &QuadratureRule, basis: Arc<SpectralBasis>, level: f64, trials: usize, seed: u64) -> Result<f64> {
    let tau = rule.as_measure();
    let mut worst: f64 = 0.0;
    let pts: Vec<Point> = match &tau {
        SignedMeasure::Atomic { atoms, .. } => atoms.iter().map(|a| a.0).collect(),
        _ => unreachable!("rules are atomic"),
    };
    for t in 0..trials {
        let p = random_polynomial(basis.clone(), level, seed.wrapping_add(t as u64))?;
        let f = p.eval_many(&pts);
        let s = crate::kernels::sigma_discrete(basis.clone(), 2.0 * level, &tau, &f)?;
        let mut diff = s.coeffs.clone();
        diff.iter_mut().zip(&p.coeffs).for_each(|(a, b)| *a -= b);
        let d = DiffusionPolynomial::new(basis.clone(), 2.0 * level, diff)?;
        worst = worst.max(crate::polynomials::sup_norm(&d) / p.l2_norm());
    }
    Ok(worst)
}

/// Rule file text: `key: value` headers, then `<cell-id> <coords...> <weight>`
/// per node, where the weight is the node's share of `W_k`.
pub fn write_rule(rule: &QuadratureRule) -> String {
    let mut s = String::new();
    let kind = match rule.kind {
        FunctionalKind::PointEvaluation => "point_evaluation",
        FunctionalKind::CellAverage => "cell_average",
    };
    let _ = writeln!(s, "manifold: {}", rule.manifold);
    let _ = writeln!(s, "L: {:?}", rule.level);
    let _ = writeln!(s, "kind: {kind}");
    for (k, (c, w)) in rule.cells.iter().zip(&rule.weights).enumerate() {
        for (p, q) in &c.nodes {
            let coords: Vec<String> = p.coords().iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{k} {} {:?}", coords.join(" "), w * q);
        }
    }
    s
}

/// Parses a rule file into an atomic measure.
pub fn read_rule(text: &str) -> Result<(SignedMeasure, f64, FunctionalKind)> {
    let mut manifold = None;
    let mut level = None;
    let mut kind = None;
    let mut atoms = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let perr = |message: String| MzError::Parse { line: i + 1, message };
        if line.is_empty() {
            continue;
        }
        if let Some((k, v)) = line.split_once(':') {
            let v = v.trim();
            match k.trim() {
                "manifold" => manifold = Some(ManifoldKind::parse(v).ok_or_else(|| perr(format!("unknown manifold {v}")))?),
                "L" => level = Some(v.parse::<f64>().map_err(|e| perr(e.to_string()))?),
                "kind" => {
                    kind = Some(match v {
                        "point_evaluation" => FunctionalKind::PointEvaluation,
                        "cell_average" => FunctionalKind::CellAverage,
                        _ => return Err(perr(format!("unknown kind {v}"))),
                    })
                }
                other => return Err(perr(format!("unknown header {other}"))),
            }
            continue;
        }
        let mk = manifold.ok_or_else(|| perr("node line before manifold header".into()))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        let want = mk.coord_count() + 2;
        if f.len() != want {
            return Err(perr(format!("expected {want} fields, found {}", f.len())));
        }
        f[0].parse::<usize>().map_err(|e| perr(format!("cell id: {e}")))?;
        let nums: Vec<f64> = f[1..].iter().map(|v| v.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| perr(e.to_string()))?;
        let p = Point::from_coords(mk, &nums[..nums.len() - 1]).map_err(|e| perr(e.to_string()))?;
        atoms.push((p, nums[nums.len() - 1]));
    }
    let manifold = manifold.ok_or_else(|| invalid("rule", "missing manifold header"))?;
    let level = level.ok_or_else(|| invalid("rule", "missing L header"))?;
    Ok((SignedMeasure::atomic(manifold, atoms), level, kind.unwrap_or(FunctionalKind::PointEvaluation)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::eigen_system;
    use crate::mzanalysis::equispaced_circle;
    use crate::partition::{build_mz_partition, PartitionOptions};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn jittered(n: usize, seed: u64) -> SignedMeasure {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let atoms = (0..n)
            .map(|k| (Point::circle(TAU * (k as f64 + rng.random_range(-0.3..0.3)) / n as f64), 1.0 / n as f64))
            .collect();
        SignedMeasure::atomic(ManifoldKind::Circle, atoms)
    }

    fn trivial(nu: &SignedMeasure) -> Partition {
        let pts: Vec<Point> = match nu {
            SignedMeasure::Atomic { atoms, .. } => atoms.iter().map(|a| a.0).collect(),
            _ => unreachable!(),
        };
        Partition::single_stage(nu, pts, 1e-3).unwrap()
    }

    #[test]
    fn moment_examples() {
        let b = eigen_system(&Manifold::circle(), 3.0).unwrap();
        assert_eq!(moments(&b, 3.0).unwrap().values, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        for m in [Manifold::circle(), Manifold::sphere(), Manifold::torus()] {
            let b = eigen_system(&m, 6.0).unwrap();
            assert!(moments_crosscheck(&b, 6.0).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn equispaced_exact_rule() {
        let level = 8.0;
        let nu = equispaced_circle(17, 0.0);
        let part = trivial(&nu);
        let b = eigen_system(&Manifold::circle(), 2.0 * level).unwrap();
        for mode in [SolveMode::LpMaximin, SolveMode::Nnls] {
            let r = solve_positive_quadrature(&nu, &part, &b, level, mode).unwrap();
            assert!(r.residual <= 1e-12);
            for w in &r.weights {
                assert_abs_diff_eq!(*w, 1.0 / 17.0, epsilon = 1e-12);
            }
            assert_abs_diff_eq!(quadrature_residual(&r, &b, level).unwrap(), r.residual, epsilon = 1e-15);
            // exactness up to degree 16 on 17 nodes
            assert!(quadrature_residual(&r, &b, 16.0).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn jittered_lp_rule() {
        let level = 8.0;
        let nu = jittered(32, 7);
        let m = Manifold::circle();
        let opts = PartitionOptions {
            relax_d: true,
            ..Default::default()
        };
        let part = build_mz_partition(&nu, TAU / 32.0, &m.grid(1e-3), opts).unwrap();
        let b = eigen_system(&m, level).unwrap();
        let lp = solve_positive_quadrature(&nu, &part, &b, level, SolveMode::LpMaximin).unwrap();
        assert!(lp.residual <= 1e-8 && lp.weights.iter().all(|w| *w >= 0.0));
        assert!(lp.min_weight_ratio >= 0.05, "ratio {}", lp.min_weight_ratio);
        assert_abs_diff_eq!(lp.total_weight(), 1.0, epsilon = 1e-10);
        let tau = lp.as_measure();
        let bb = Arc::new(b.clone());
        let rule = ReferenceQuadrature::for_level(&m, level).unwrap();
        for s in 0..50 {
            let p = random_polynomial(bb.clone(), level, s).unwrap();
            let want = rule.integrate(|x| p.eval(x));
            let got: f64 = match &tau {
                SignedMeasure::Atomic { atoms, .. } => atoms.iter().map(|(x, w)| w * p.eval(x)).sum(),
                _ => unreachable!(),
            };
            assert_abs_diff_eq!(got, want, epsilon = 1e-8);
        }
        if let Ok(nn) = solve_positive_quadrature(&nu, &part, &b, level, SolveMode::Nnls) {
            assert!(lp.min_weight_ratio >= nn.min_weight_ratio - 1e-12);
        }
        let again = solve_positive_quadrature(&nu, &part, &b, level, SolveMode::LpMaximin).unwrap();
        assert_eq!(again.weights, lp.weights);
    }

    #[test]
    fn half_circle_infeasible() {
        let atoms: Vec<(Point, f64)> = (0..40).map(|k| (Point::circle(0.05 + (PI - 0.1) * k as f64 / 39.0), 1.0 / 40.0)).collect();
        let nu = SignedMeasure::atomic(ManifoldKind::Circle, atoms);
        let part = trivial(&nu);
        let b = eigen_system(&Manifold::circle(), 4.0).unwrap();
        match solve_positive_quadrature(&nu, &part, &b, 4.0, SolveMode::LpMaximin) {
            Err(MzError::Infeasible { residual, direction }) => {
                assert!(residual > 1e-3);
                assert_eq!(direction.len(), 9);
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
        assert!(matches!(solve_positive_quadrature(&nu, &part, &b, 4.0, SolveMode::Nnls), Err(MzError::Infeasible { .. })));
    }

    #[test]
    fn quadrature_mz_checks() {
        let level = 8.0;
        let m = Manifold::circle();
        let b = Arc::new(eigen_system(&m, 4.0 * level).unwrap());
        let nu = equispaced_circle(65, 0.2);
        let exact = QuadratureRule::point_evaluation(m.kind, 32.0, &(0..65).map(|k| Point::circle(0.2 + TAU * k as f64 / 65.0)).collect::<Vec<_>>(), vec![1.0 / 65.0; 65], &[1.0 / 65.0; 65]).unwrap();
        let r = verify_quadrature_mz(&exact, b.clone(), level, 2.0, 20, 3, 2.0).unwrap();
        assert_abs_diff_eq!(r.mz.c1, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.mz.c2, 1.0, epsilon = 1e-10);
        assert!(r.product_error <= 1e-10);
        let short = QuadratureRule { level: 16.0, ..exact.clone() };
        assert!(matches!(verify_quadrature_mz(&short, b.clone(), level, 2.0, 2, 3, 2.0), Err(MzError::InsufficientQuadrature { .. })));
        assert!(sigma_reproduction_error(&exact, b, level, 5, 1).unwrap() <= 1e-10);
        let _ = nu;
    }

    fn jittered_point_rule(n: usize, order: f64, seed: u64, basis: &SpectralBasis) -> QuadratureRule {
        let nu = jittered(n, seed);
        let cells = match &nu {
            SignedMeasure::Atomic { atoms, .. } => atoms.iter().map(|a| RuleCell { nodes: vec![(a.0, 1.0)], mu_mass: 1.0 / n as f64 }).collect(),
            _ => unreachable!(),
        };
        let mut r = solve_on_cells(cells, TAU / n as f64, basis, order, SolveMode::LpMaximin).unwrap();
        r.kind = FunctionalKind::PointEvaluation;
        r
    }

    #[test]
    fn jittered_rule_mz_band() {
        let level = 8.0;
        let b = Arc::new(eigen_system(&Manifold::circle(), 4.0 * level).unwrap());
        let rule = jittered_point_rule(128, 4.0 * level, 11, &b);
        assert!(rule.residual <= 1e-8);
        let dim = b.dim(rule.level) as f64;
        assert!((rule.total_weight() - 1.0).abs() <= rule.residual * dim + 1e-12);
        let r = verify_quadrature_mz(&rule, b, level, 2.0, 20, 5, 2.0).unwrap();
        assert!(r.mz.c1 >= 0.2 && r.mz.c2 <= 5.0, "c1 {} c2 {}", r.mz.c1, r.mz.c2);
        assert!(r.product_error <= 1e-8, "product error {}", r.product_error);
    }

    #[test]
    fn sigma_reproduction_constant() {
        let mut fitted: f64 = 0.0;
        for level in [8.0, 16.0, 32.0] {
            let b = Arc::new(eigen_system(&Manifold::circle(), 4.0 * level).unwrap());
            let rule = jittered_point_rule(16 * level as usize, 4.0 * level, 3, &b);
            let e = sigma_reproduction_error(&rule, b, level, 5, 9).unwrap();
            fitted = fitted.max(e * level);
        }
        assert!(fitted <= 1e-6, "fitted constant {fitted}");
    }

    #[test]
    fn rule_file_roundtrip() {
        let nu = jittered(20, 1);
        let part = trivial(&nu);
        let b = eigen_system(&Manifold::circle(), 4.0).unwrap();
        let r = solve_positive_quadrature(&nu, &part, &b, 4.0, SolveMode::LpMaximin).unwrap();
        let text = write_rule(&r);
        let (tau, level, kind) = read_rule(&text).unwrap();
        assert_eq!(level, 4.0);
        assert_eq!(kind, FunctionalKind::CellAverage);
        assert_eq!(tau, r.as_measure());
        assert!(matches!(read_rule("manifold: circle\nL: 4\n0 1.0\n"), Err(MzError::Parse { line: 3, .. })));
    }
}
