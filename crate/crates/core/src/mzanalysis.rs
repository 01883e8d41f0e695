//! Marcinkiewicz-Zygmund constants: exact `p = 2` bounds from the Gram
//! matrix, sampled bounds for other `p`, strong-MZ discretization errors,
//! sup-norm gaps and the regularity/dominance round trip.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, MzError, Result};
use crate::kernels::phi_zonal;
use crate::manifolds::{Manifold, ManifoldKind, Point, SpectralBasis};
use crate::measures::{regularity_norm, support_mesh_norm, MassProbe, SignedMeasure, WeightFunction};
use crate::partition::Partition;
use crate::pointsets::{mesh_norm, PointSet};
use crate::polynomials::{gradient_norm_at, lp_integral, norm_p, random_polynomial, sup_norm, DiffusionPolynomial, NormMeasure};

/// Largest `dim Pi_L` accepted by [`mz_constants_p2`].
pub const GRAM_DIM_CAP: usize = 2048;

/// Serializes exponents as numbers, with `"inf"` for the sup norm.
pub(crate) mod exponent {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
        if p.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*p)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad exponent {t}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MzMethod {
    #[serde(rename = "GramExact_p2")]
    GramExactP2,
    Sampled,
}

/// Lower and upper MZ constants with their provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MZReport {
    pub manifold: ManifoldKind,
    #[serde(rename = "L")]
    pub level: f64,
    #[serde(with = "exponent")]
    pub p: f64,
    pub measure_id: String,
    pub method: MzMethod,
    pub c1: f64,
    pub c2: f64,
    pub eta: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    pub fitted_constants: BTreeMap<String, f64>,
}

/// Short descriptor of a measure for reports.
pub fn measure_id(nu: &SignedMeasure) -> String {
    match nu {
        SignedMeasure::Atomic { kind, atoms } => format!("atomic:{kind}:{}", atoms.len()),
        SignedMeasure::Density { kind, weight } => {
            let name = match weight {
                WeightFunction::Const { value } => format!("const({value})"),
                WeightFunction::Sin => "sin".into(),
                WeightFunction::SinAbs => "sin_abs".into(),
                WeightFunction::Jump { low, high } => format!("jump({low},{high})"),
                WeightFunction::Table { breaks, .. } => format!("table({})", breaks.len()),
            };
            format!("density:{kind}:{name}")
        }
        SignedMeasure::BallAverage { kind, centers, .. } => format!("ball_average:{kind}:{}", centers.len()),
    }
}

fn check_kind(nu: &SignedMeasure, basis: &SpectralBasis) -> Result<()> {
    if nu.kind() != basis.kind {
        return Err(MzError::ManifoldMismatch {
            expected: basis.kind.to_string(),
            found: nu.kind().to_string(),
        });
    }
    Ok(())
}

/// Rows per block in the Gram assembly.
const GRAM_BLOCK: usize = 2048;

/// `G_jk = int phi_j phi_k d|nu|` over `Pi_L`, summed block by block in a
/// fixed order so the result does not depend on the thread count.
pub fn gram_matrix(nu: &SignedMeasure, basis: &SpectralBasis, level: f64) -> Result<DMatrix<f64>> {
    check_kind(nu, basis)?;
    basis.require_level(level)?;
    let n = basis.dim(level);
    let nodes = nu.discretize(level);
    let blocks: Vec<DMatrix<f64>> = nodes
        .par_chunks(GRAM_BLOCK)
        .map(|chunk| {
            let mut a = DMatrix::zeros(chunk.len(), n);
            let mut buf = Vec::new();
            for (i, (y, w)) in chunk.iter().enumerate() {
                basis.eval_into(y, n, &mut buf);
                let s = w.abs().sqrt();
                for (j, v) in buf.iter().enumerate() {
                    a[(i, j)] = s * v;
                }
            }
            a.tr_mul(&a)
        })
        .collect();
    Ok(blocks.into_iter().fold(DMatrix::zeros(n, n), |acc, b| acc + b))
}

/// Exact `p = 2` constants: the extreme eigenvalues of the Gram matrix.
pub fn mz_constants_p2(nu: &SignedMeasure, basis: &SpectralBasis, level: f64) -> Result<MZReport> {
    mz_constants_p2_capped(nu, basis, level, GRAM_DIM_CAP)
}

pub fn mz_constants_p2_capped(nu: &SignedMeasure, basis: &SpectralBasis, level: f64, cap: usize) -> Result<MZReport> {
    if !(level >= 1.0) {
        return Err(MzError::InvalidLevel(level));
    }
    basis.require_level(level)?;
    let n = basis.dim(level);
    if n > cap {
        return Err(MzError::DimensionCap { dim: n, cap });
    }
    let g = gram_matrix(nu, basis, level)?;
    let eig = SymmetricEigen::new(g).eigenvalues;
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut fitted = BTreeMap::new();
    fitted.insert("lambda_min_raw".into(), lo);
    fitted.insert("dim".into(), n as f64);
    Ok(MZReport {
        manifold: basis.kind,
        level,
        p: 2.0,
        measure_id: measure_id(nu),
        method: MzMethod::GramExactP2,
        c1: lo.max(0.0),
        c2: hi.max(0.0),
        eta: None,
        trials: 0,
        seed: 0,
        fitted_constants: fitted,
    })
}

/// Centers of the localized-kernel test polynomials.
fn kernel_centers(m: &Manifold, nu: &SignedMeasure) -> Vec<Point> {
    let mut c: Vec<Point> = m.grid(1.0).into_iter().step_by(3).take(6).collect();
    if let SignedMeasure::Atomic { atoms, .. } = nu {
        c.extend(atoms.iter().step_by((atoms.len() / 4).max(1)).take(4).map(|a| a.0));
    }
    c
}

/// Trial set: `trials` random polynomials followed by `Phi_L(x0, .)`.
fn trial_polynomials(basis: &Arc<SpectralBasis>, level: f64, trials: usize, seed: u64, centers: &[Point]) -> Result<Vec<DiffusionPolynomial>> {
    let mut out: Vec<DiffusionPolynomial> = (0..trials)
        .into_par_iter()
        .map(|t| random_polynomial(basis.clone(), level, seed.wrapping_add(t as u64)))
        .collect::<Result<_>>()?;
    for c in centers {
        out.push(DiffusionPolynomial::localized_kernel(basis.clone(), level, c)?);
    }
    Ok(out)
}

/// `||P||_{nu;p}^p / ||P||_{mu;p}^p` (ratio of sup norms for `p = inf`).
pub fn mz_ratio(nu: &SignedMeasure, p: &DiffusionPolynomial, exponent: f64) -> Result<f64> {
    if exponent.is_infinite() {
        return Ok(norm_p(p, NormMeasure::Nu(nu), exponent)? / sup_norm(p));
    }
    Ok(lp_integral(p, NormMeasure::Nu(nu), exponent)? / lp_integral(p, NormMeasure::Mu, exponent)?)
}

/// Sampled (inner) MZ constants over random and localized test polynomials.
pub fn mz_ratio_bounds(nu: &SignedMeasure, basis: Arc<SpectralBasis>, level: f64, p: f64, trials: usize, seed: u64) -> Result<MZReport> {
    if !(p >= 1.0) {
        return Err(invalid("p", format!("need 1 <= p <= inf, got {p}")));
    }
    check_kind(nu, &basis)?;
    let m = Manifold::new(basis.kind);
    let polys = trial_polynomials(&basis, level, trials, seed, &kernel_centers(&m, nu))?;
    let ratios: Vec<f64> = polys.par_iter().map(|q| mz_ratio(nu, q, p)).collect::<Result<_>>()?;
    let c1 = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let c2 = ratios.iter().copied().fold(0.0, f64::max);
    let mut fitted = BTreeMap::new();
    fitted.insert("kernel_trials".into(), (polys.len() - trials) as f64);
    Ok(MZReport {
        manifold: basis.kind,
        level,
        p,
        measure_id: measure_id(nu),
        method: MzMethod::Sampled,
        c1,
        c2,
        eta: None,
        trials,
        seed,
        fitted_constants: fitted,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongMzReport {
    pub level: f64,
    #[serde(with = "exponent")]
    pub p: f64,
    pub d: f64,
    /// Worst cell-wise discrepancy relative to `||P||_{mu;p}^p`.
    pub eta_cells: f64,
    /// Worst ball-oscillation sum relative to `||P||_{mu;p}^p` (atomic
    /// measures only).
    pub eta_pointwise: Option<f64>,
    /// Worst `(sum_k mu(X_k) sup_{X~_k} |grad P|^p)^{1/p} / (L ||P||_{mu;p})`.
    pub gradient_overlap: Option<f64>,
    /// `delta(C)` for the cell representatives.
    pub center_mesh: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Radius factor `A` of the enlarged balls in the pointwise variant.
pub const OSCILLATION_FACTOR: f64 = 2.0;

fn ball_samples(m: &Manifold, x: &Point, r: f64) -> (Vec<Point>, f64) {
    const RINGS: usize = 6;
    let angles = if m.kind == ManifoldKind::Circle { 2 } else { 16 };
    let mut pts = vec![*x];
    for i in 1..=RINGS {
        let s = r * i as f64 / RINGS as f64;
        for j in 0..angles {
            pts.push(m.offset(x, s, TAU * j as f64 / angles as f64));
        }
    }
    // every point of the ball lies within this distance of a sample
    let radial = r / (2.0 * RINGS as f64);
    let angular = if angles == 2 { 0.0 } else { r * (std::f64::consts::PI / angles as f64) };
    (pts, radial + angular)
}

type StrongRow = (f64, Option<f64>, Option<f64>);

/// Per-polynomial strong-MZ terms: the cell-wise discrepancy and, for
/// atomic `nu`, the ball-oscillation and gradient-overlap sums.
fn strong_rows(nu: &SignedMeasure, partition: &Partition, polys: &[DiffusionPolynomial], p: f64) -> Result<(Vec<StrongRow>, f64)> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid("p", format!("need 1 <= p < inf, got {p}")));
    }
    if partition.kind != nu.kind() {
        return Err(MzError::ManifoldMismatch {
            expected: partition.kind.to_string(),
            found: nu.kind().to_string(),
        });
    }
    let m = Manifold::new(nu.kind());
    let grid = partition.labeled_grid();
    let (nu_pts, nu_w, nu_labels) = partition.nu_atoms(nu)?;
    let ncell = partition.len();
    let mut mu_cell = vec![0.0; ncell];
    for (&l, &w) in grid.labels.iter().zip(&grid.weights) {
        mu_cell[l] += w;
    }
    let mut nu_cell = vec![0.0; ncell];
    for (&l, &w) in nu_labels.iter().zip(&nu_w) {
        nu_cell[l] += w;
    }
    if let Some(k) = nu_cell.iter().position(|&v| !(v > 0.0)) {
        return Err(MzError::InvariantViolated(format!("cell {k} carries no |nu| mass; partition does not belong to this measure")));
    }
    let centers = PointSet::from_points_unchecked(m.kind, partition.final_centers.clone());
    let probe = m.grid(partition.mass_grid_spacing);
    let delta = mesh_norm(&centers, &probe)?;
    let pointwise = nu.is_atomic();
    let rows = polys
        .par_iter()
        .map(|q| {
            let gv = q.eval_many(&grid.points);
            let mut mu_int = vec![0.0; ncell];
            let mut total = 0.0;
            for ((&l, &w), v) in grid.labels.iter().zip(&grid.weights).zip(&gv) {
                let a = w * v.abs().powf(p);
                mu_int[l] += a;
                total += a;
            }
            let nv = q.eval_many(&nu_pts);
            let mut nu_int = vec![0.0; ncell];
            for ((&l, &w), v) in nu_labels.iter().zip(&nu_w).zip(&nv) {
                nu_int[l] += w * v.abs().powf(p);
            }
            let cells: f64 = (0..ncell).map(|k| (mu_int[k] - mu_cell[k] / nu_cell[k] * nu_int[k]).abs()).sum();
            if !pointwise {
                return (cells / total, None, None);
            }
            let mut osc = 0.0;
            let mut grad = 0.0;
            for x in &centers.points {
                let ball = m.ball_measure(x, delta);
                let (pts, h) = ball_samples(&m, x, OSCILLATION_FACTOR * delta);
                let vals = q.eval_many(&pts);
                let mut hi = f64::NEG_INFINITY;
                let mut lo = f64::INFINITY;
                let mut slope: f64 = 0.0;
                let mut gmax: f64 = 0.0;
                for (y, v) in pts.iter().zip(&vals) {
                    let a = v.abs().powf(p);
                    hi = hi.max(a);
                    lo = lo.min(a);
                    let g = gradient_norm_at(q, y);
                    gmax = gmax.max(g);
                    slope = slope.max(p * v.abs().powf(p - 1.0) * g);
                }
                // sampled oscillation plus a first-order allowance for the
                // gaps between samples
                osc += ball * (hi - lo + 2.0 * h * slope);
                grad += ball * gmax.powf(p);
            }
            let norm = total.powf(1.0 / p);
            (cells / total, Some(osc / total), Some(grad.powf(1.0 / p) / (q.level * norm)))
        })
        .collect();
    Ok((rows, delta))
}

/// Cell-wise strong-MZ discrepancy of one polynomial relative to
/// `||P||_{mu;p}^p`.
pub fn strong_mz_error(nu: &SignedMeasure, partition: &Partition, q: &DiffusionPolynomial, p: f64) -> Result<f64> {
    Ok(strong_rows(nu, partition, std::slice::from_ref(q), p)?.0[0].0)
}

/// Strong-MZ discretization error of `nu` on its partition.
pub fn verify_strong_mz(nu: &SignedMeasure, partition: &Partition, basis: Arc<SpectralBasis>, level: f64, p: f64, trials: usize, seed: u64) -> Result<StrongMzReport> {
    check_kind(nu, &basis)?;
    let m = Manifold::new(basis.kind);
    let polys = trial_polynomials(&basis, level, trials, seed, &kernel_centers(&m, nu))?;
    let (rows, delta) = strong_rows(nu, partition, &polys, p)?;
    let fold = |f: fn(&StrongRow) -> Option<f64>| rows.iter().filter_map(f).reduce(f64::max);
    Ok(StrongMzReport {
        level,
        p,
        d: partition.d,
        eta_cells: fold(|r| Some(r.0)).unwrap_or(0.0),
        eta_pointwise: fold(|r| r.1),
        gradient_overlap: fold(|r| r.2),
        center_mesh: delta,
        trials,
        seed,
    })
}

/// `| ||P||_{nu;inf} - ||P||_{mu;inf} | / ||P||_{mu;inf}`.
pub fn sup_norm_gap_of(nu: &SignedMeasure, p: &DiffusionPolynomial) -> Result<f64> {
    let s = sup_norm(p);
    if s == 0.0 {
        return Ok(0.0);
    }
    Ok((norm_p(p, NormMeasure::Nu(nu), f64::INFINITY)? - s).abs() / s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupGapReport {
    pub level: f64,
    pub worst_gap: f64,
    /// `delta(supp nu) L`, the quantity the gap scales with.
    pub support_mesh_times_level: f64,
    pub trials: usize,
    pub seed: u64,
}

pub fn sup_norm_gap(nu: &SignedMeasure, basis: Arc<SpectralBasis>, level: f64, trials: usize, seed: u64) -> Result<SupGapReport> {
    check_kind(nu, &basis)?;
    let m = Manifold::new(basis.kind);
    let polys = trial_polynomials(&basis, level, trials, seed, &kernel_centers(&m, nu))?;
    let gaps: Vec<f64> = polys.par_iter().map(|q| sup_norm_gap_of(nu, q)).collect::<Result<_>>()?;
    let probe = m.grid(std::f64::consts::PI / (64.0 * level.max(1.0)));
    Ok(SupGapReport {
        level,
        worst_gap: gaps.iter().copied().fold(0.0, f64::max),
        support_mesh_times_level: support_mesh_norm(nu, &probe)? * level,
        trials,
        seed,
    })
}

/// `max_x |nu|(B(x, d)) / mu(B(x, d))` and `max_x mu(B(x, d)) / |nu|(B(x, d))`
/// over `centers` (the second infinite when a ball is empty).
pub fn relative_norms(nu: &SignedMeasure, d: f64, centers: &[Point]) -> (f64, f64) {
    let m = nu.manifold();
    let probe = MassProbe::new(nu, d);
    let mut r: f64 = 0.0;
    let mut dmin = f64::INFINITY;
    for x in centers {
        let q = probe.mass(x, d) / m.ball_measure(x, d);
        r = r.max(q);
        dmin = dmin.min(q);
    }
    (r, if dmin > 0.0 { 1.0 / dmin } else { f64::INFINITY })
}

fn regularity_centers(nu: &SignedMeasure, d: f64) -> Vec<Point> {
    let m = nu.manifold();
    let mut c = m.grid((d / 4.0).max(1e-3));
    if let SignedMeasure::Atomic { atoms, .. } = nu {
        c.extend(atoms.iter().map(|a| a.0));
    }
    c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    /// `r L`.
    pub r_times_level: f64,
    /// `sup_x int_{rho(x,y) >= r} |Phi_L(x, y)| d|nu|(y)`, over sample centers.
    pub tail: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConverseScale {
    pub s: u32,
    /// `max(1, R A1)^{1/(S - alpha)} / L` (with `c5(S) = 1`).
    pub d: f64,
    /// `D_rel` at that scale.
    pub d_rel: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationReport {
    pub level: f64,
    #[serde(with = "exponent")]
    pub p: f64,
    pub measure_id: String,
    /// `max_x |nu|(B(x, 1/L)) / mu(B(x, 1/L))`.
    pub r_rel: f64,
    /// `max_x mu(B(x, 1/L)) / |nu|(B(x, 1/L))`.
    pub d_rel: f64,
    pub dominance_infinite: bool,
    pub method: MzMethod,
    pub c1: f64,
    pub c2: f64,
    /// `c2 / R_rel`: the constant of the upper bound predicted from regularity.
    pub upper_from_regularity: f64,
    /// `R_rel / c2`: the constant of regularity inferred from the upper bound.
    pub regularity_from_upper: f64,
    /// `(1/c1) / D_rel`: the constant of the lower bound predicted from dominance.
    pub lower_from_dominance: f64,
    pub converse_scales: Vec<ConverseScale>,
    pub phi_tails: Vec<TailRow>,
}

/// Regularity/dominance against measured MZ constants, in both directions.
pub fn characterization_roundtrip(nu: &SignedMeasure, basis: Arc<SpectralBasis>, level: f64, p: f64, trials: usize, seed: u64) -> Result<CharacterizationReport> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid("p", format!("need 1 <= p < inf, got {p}")));
    }
    if nu.is_zero() {
        return Err(MzError::EmptySupport);
    }
    check_kind(nu, &basis)?;
    let m = Manifold::new(basis.kind);
    let alpha = m.alpha();
    let d = 1.0 / level;
    let centers = regularity_centers(nu, d);
    let (r_rel, d_rel) = relative_norms(nu, d, &centers);
    let mz = if p == 2.0 {
        mz_constants_p2(nu, &basis, level)?
    } else {
        mz_ratio_bounds(nu, basis.clone(), level, p, trials, seed)?
    };
    let a1 = if mz.c1 > 0.0 { 1.0 / mz.c1 } else { f64::INFINITY };
    let converse_scales = (1..=6u32)
        .map(|k| {
            let s = alpha as u32 + k;
            let ds = (r_rel * a1).max(1.0).powf(1.0 / (s as f64 - alpha)) / level;
            let ds = if ds.is_finite() { ds.min(m.diameter()) } else { m.diameter() };
            let c = regularity_centers(nu, ds);
            ConverseScale { s, d: ds, d_rel: relative_norms(nu, ds, &c).1 }
        })
        .collect();
    let z = phi_zonal(m.kind, level);
    let nodes = nu.discretize(level);
    let tail_centers: Vec<Point> = m.grid(1.0).into_iter().step_by(2).take(8).collect();
    let phi_tails = [1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|&rl| {
            let r = rl / level;
            let tail = tail_centers
                .iter()
                .map(|x| {
                    nodes
                        .iter()
                        .filter(|(y, _)| m.distance(x, y) >= r)
                        .map(|(y, w)| w.abs() * z.eval(x, y).abs())
                        .sum::<f64>()
                })
                .fold(0.0, f64::max);
            TailRow { r_times_level: rl, tail }
        })
        .collect();
    Ok(CharacterizationReport {
        level,
        p,
        measure_id: measure_id(nu),
        r_rel,
        d_rel,
        dominance_infinite: d_rel.is_infinite(),
        method: mz.method,
        c1: mz.c1,
        c2: mz.c2,
        upper_from_regularity: mz.c2 / r_rel,
        regularity_from_upper: r_rel / mz.c2,
        lower_from_dominance: a1 / d_rel,
        converse_scales,
        phi_tails,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleEquivalence {
    pub d: f64,
    pub gammas: Vec<f64>,
    /// `|||nu|||_{R, gamma d}` for each gamma (index 0 is `gamma = 1`).
    pub r_norms: Vec<f64>,
    /// Smallest `c1` with `R(gamma d) <= c1 (gamma + 1)^alpha R(d)` on the probes.
    pub fitted_c1: f64,
    /// Whether `R(d) <= gamma^alpha R(gamma d)` held on every probe.
    pub lower_holds: bool,
}

/// Fits the constant of the scale equivalence of regularity norms.
pub fn scale_equivalence(nu: &SignedMeasure, d: f64, gammas: &[f64]) -> Result<ScaleEquivalence> {
    let alpha = nu.manifold().alpha();
    let base = regularity_norm(nu, d, &regularity_centers(nu, d))?.r_norm.unwrap_or(0.0);
    let mut r_norms = vec![base];
    let mut fitted: f64 = 0.0;
    let mut lower = true;
    for &g in gammas {
        if !(g > 1.0) {
            return Err(invalid("gamma", "must exceed 1"));
        }
        let rg = regularity_norm(nu, g * d, &regularity_centers(nu, g * d))?.r_norm.unwrap_or(0.0);
        fitted = fitted.max(rg / ((g + 1.0).powf(alpha) * base));
        lower &= base <= g.powf(alpha) * rg * (1.0 + 1e-12);
        r_norms.push(rg);
    }
    Ok(ScaleEquivalence {
        d,
        gammas: gammas.to_vec(),
        r_norms,
        fitted_c1: fitted,
        lower_holds: lower,
    })
}

/// `N` equispaced circle atoms of equal weight summing to 1, rotated by `phase`.
pub fn equispaced_circle(n: usize, phase: f64) -> SignedMeasure {
    let atoms = (0..n).map(|k| (Point::circle(phase + TAU * k as f64 / n as f64), 1.0 / n as f64)).collect();
    SignedMeasure::atomic(ManifoldKind::Circle, atoms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::eigen_system;
    use crate::partition::{build_mz_partition, PartitionOptions};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn circle(level: f64) -> Arc<SpectralBasis> {
        Arc::new(eigen_system(&Manifold::circle(), level).unwrap())
    }

    #[test]
    fn gram_examples() {
        let b = circle(32.0);
        let r = mz_constants_p2(&equispaced_circle(65, 0.0), &b, 32.0).unwrap();
        assert_abs_diff_eq!(r.c1, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.c2, 1.0, epsilon = 1e-10);
        assert_eq!(r.method, MzMethod::GramExactP2);
        for m in [Manifold::circle(), Manifold::sphere(), Manifold::torus()] {
            let b = eigen_system(&m, 6.0).unwrap();
            let r = mz_constants_p2(&SignedMeasure::uniform(m.kind), &b, 6.0).unwrap();
            assert_abs_diff_eq!(r.c1, 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(r.c2, 1.0, epsilon = 1e-10);
        }
        // quarter arc: nearly rank deficient
        let arc: Vec<(Point, f64)> = (0..40).map(|k| (Point::circle(PI / 2.0 * k as f64 / 39.0), 1.0 / 40.0)).collect();
        let nu = SignedMeasure::atomic(ManifoldKind::Circle, arc.clone());
        let b = circle(2.0);
        let r = mz_constants_p2(&nu, &b, 2.0).unwrap();
        assert!(r.c1 <= 1e-3, "c1 = {}", r.c1);
        // oracle: minimize the Rayleigh quotient over random unit vectors
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut best = f64::INFINITY;
        for _ in 0..20000 {
            let a: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n2: f64 = a.iter().map(|v| v * v).sum();
            let q: f64 = arc.iter().map(|(x, w)| w * b.eval_all(x, 5).iter().zip(&a).map(|(u, v)| u * v).sum::<f64>().powi(2)).sum();
            best = best.min(q / n2);
        }
        assert!(r.c1 <= best + 1e-12);
        let big = eigen_system(&Manifold::circle(), 40.0).unwrap();
        assert!(matches!(mz_constants_p2_capped(&nu, &big, 40.0, 50), Err(MzError::DimensionCap { dim: 81, cap: 50 })));
    }

    #[test]
    fn sampled_examples() {
        let b = circle(16.0);
        let r = mz_ratio_bounds(&SignedMeasure::uniform(ManifoldKind::Circle), b.clone(), 16.0, 3.0, 10, 1).unwrap();
        assert_abs_diff_eq!(r.c1, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.c2, 1.0, epsilon = 1e-10);
        let nu = equispaced_circle(64, 0.0);
        let r = mz_ratio_bounds(&nu, b.clone(), 16.0, 1.0, 40, 3).unwrap();
        assert!(r.c1 >= 0.9 && r.c2 <= 1.1, "[{}, {}]", r.c1, r.c2);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let atoms: Vec<(Point, f64)> = (0..40).map(|_| (Manifold::circle().random_point(&mut rng), 1.0 / 40.0)).collect();
        let nu = SignedMeasure::atomic(ManifoldKind::Circle, atoms);
        let b = circle(6.0);
        let exact = mz_constants_p2(&nu, &b, 6.0).unwrap();
        let s = mz_ratio_bounds(&nu, b.clone(), 6.0, 2.0, 60, 2).unwrap();
        assert!(s.c1 >= exact.c1 - 1e-10 && s.c2 <= exact.c2 + 1e-10);
        assert!(mz_ratio_bounds(&nu, b, 6.0, 0.5, 3, 2).is_err());
    }

    #[test]
    fn report_serializes_infinite_p() {
        let b = circle(4.0);
        let r = mz_ratio_bounds(&equispaced_circle(20, 0.1), b, 4.0, f64::INFINITY, 3, 1).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"p\":\"inf\"") && s.contains("\"L\":4.0"));
        let back: MZReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn sup_gap_closed_form() {
        for (l, n) in [(8usize, 64usize), (16, 64)] {
            let b = circle(l as f64);
            // cos(L theta) peaks at 0; shifted atoms sit mid-gap around it
            let nu = equispaced_circle(n, PI / n as f64);
            let p = DiffusionPolynomial::basis_function(b, l as f64, 2 * l - 1).unwrap();
            let gap = sup_norm_gap_of(&nu, &p).unwrap();
            assert_abs_diff_eq!(gap, 1.0 - (l as f64 * PI / n as f64).cos(), epsilon = 1e-9);
        }
        let b = circle(5.0);
        let one = DiffusionPolynomial::basis_function(b.clone(), 5.0, 0).unwrap();
        assert_eq!(sup_norm_gap_of(&equispaced_circle(7, 0.0), &one).unwrap(), 0.0);
        let dense = equispaced_circle(20000, 0.0);
        let r = sup_norm_gap(&dense, b, 5.0, 10, 1).unwrap();
        assert!(r.worst_gap <= 1e-3);
    }

    #[test]
    fn strong_mz_density_is_exact() {
        let nu = SignedMeasure::uniform(ManifoldKind::Circle);
        let m = Manifold::circle();
        let part = build_mz_partition(&nu, 0.01, &m.grid(1e-3), PartitionOptions::default()).unwrap();
        let r = verify_strong_mz(&nu, &part, circle(10.0), 10.0, 1.0, 5, 1).unwrap();
        assert!(r.eta_cells <= 1e-10, "eta {}", r.eta_cells);
        assert!(r.eta_pointwise.is_none());
    }

    #[test]
    fn strong_mz_constant_polynomial() {
        let m = Manifold::circle();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 700;
        let atoms: Vec<(Point, f64)> = (0..n)
            .map(|k| (Point::circle(TAU * (k as f64 + rng.random_range(-0.3..0.3)) / n as f64), 1.0 / n as f64))
            .collect();
        let nu = SignedMeasure::atomic(m.kind, atoms);
        let part = build_mz_partition(&nu, 0.01, &m.grid(1e-3), PartitionOptions::default()).unwrap();
        let b = circle(10.0);
        let one = DiffusionPolynomial::basis_function(b.clone(), 10.0, 0).unwrap();
        assert!(strong_mz_error(&nu, &part, &one, 1.0).unwrap() <= 1e-14);
        let r = verify_strong_mz(&nu, &part, b, 10.0, 1.0, 5, 1).unwrap();
        assert!(r.eta_cells > 0.0 && r.eta_pointwise.unwrap() >= r.eta_cells);
        assert!(r.gradient_overlap.unwrap() > 0.0);
    }

    #[test]
    fn characterization_uniform_and_perturbed() {
        let b = circle(8.0);
        let r = characterization_roundtrip(&SignedMeasure::uniform(ManifoldKind::Circle), b.clone(), 8.0, 2.0, 10, 1).unwrap();
        for v in [r.r_rel, r.d_rel, r.c1, r.c2] {
            assert!((0.99..=1.01).contains(&v), "{r:?}");
        }
        let base = equispaced_circle(64, 0.0);
        let mut atoms = match &base {
            SignedMeasure::Atomic { atoms, .. } => atoms.clone(),
            _ => unreachable!(),
        };
        atoms[5].1 *= 2.0;
        let bumped = SignedMeasure::atomic(ManifoldKind::Circle, atoms);
        let r0 = characterization_roundtrip(&base, b.clone(), 8.0, 2.0, 10, 1).unwrap();
        let r1 = characterization_roundtrip(&bumped, b.clone(), 8.0, 2.0, 10, 1).unwrap();
        assert!((r1.r_rel - r0.r_rel).signum() == (r1.c2 - r0.c2).signum() && r1.c2 > r0.c2);
        let half: Vec<(Point, f64)> = (0..50).map(|k| (Point::circle(PI * k as f64 / 49.0 * 0.98), 1.0 / 50.0)).collect();
        let half = SignedMeasure::atomic(ManifoldKind::Circle, half);
        let r = characterization_roundtrip(&half, b, 8.0, 2.0, 10, 1).unwrap();
        assert!(r.dominance_infinite && r.c1 <= 1e-3);
    }

    #[test]
    fn scale_equivalence_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Manifold::circle();
        let atoms: Vec<(Point, f64)> = (0..300).map(|_| (m.random_point(&mut rng), 1.0 / 300.0)).collect();
        let nu = SignedMeasure::atomic(m.kind, atoms);
        let r = scale_equivalence(&nu, 0.02, &[2.0, 4.0, 8.0]).unwrap();
        assert!(r.fitted_c1.is_finite() && r.fitted_c1 > 0.0);
        assert!(r.lower_holds);
    }
}
