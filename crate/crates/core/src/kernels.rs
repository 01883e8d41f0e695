//! The smooth cutoff `h`, the localized kernel `Phi_L`, the heat kernel
//! `K_t`, the operators `sigma_L` and their discretizations, and numerical
//! probes of the kernel bounds.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, MzError, Result};
use crate::manifolds::{gauss_legendre, level_degree, Manifold, ManifoldKind, Point, ReferenceQuadrature, SpectralBasis, ZonalKernel, LEVEL_EPS};
use crate::measures::SignedMeasure;
use crate::polynomials::{christoffel, ls_slope, DiffusionPolynomial};

fn bump(u: f64) -> f64 {
    let a = (u - 0.5) * (1.0 - u);
    if a <= 0.0 {
        0.0
    } else {
        (-1.0 / a).exp()
    }
}

fn bump_integral(a: f64, b: f64) -> f64 {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (x, w) = GL.get_or_init(|| gauss_legendre(16));
    const PANELS: usize = 8;
    let h = (b - a) / PANELS as f64;
    let mut s = 0.0;
    for p in 0..PANELS {
        let c = a + h * (p as f64 + 0.5);
        for (xi, wi) in x.iter().zip(w) {
            s += wi * bump(c + 0.5 * h * xi);
        }
    }
    0.5 * h * s
}

/// The default cutoff: `1` on `|t| <= 1/2`, `0` on `|t| >= 1`, and on
/// `(1/2, 1)` the normalized tail integral of `exp(-1/((u-1/2)(1-u)))`.
pub fn cutoff_h(t: f64) -> f64 {
    let t = t.abs();
    if t <= 0.5 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let upper = bump_integral(t, 1.0);
        let lower = bump_integral(0.5, t);
        upper / (upper + lower)
    }
}

/// The cutoff together with the number of derivatives whose continuity
/// was confirmed by finite-difference probing at the junctions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffFunction {
    pub smoothness_witness: usize,
}

/// Highest derivative order probed by [`CutoffFunction::probe`].
pub const MAX_PROBED_ORDER: usize = 6;

fn forward_difference(f: impl Fn(f64) -> f64, x: f64, s: f64, k: usize) -> f64 {
    // sum_i (-1)^(k-i) C(k,i) f(x + i s)
    let mut c = 1.0;
    let mut acc = 0.0;
    for i in 0..=k {
        let sign = if (k - i) % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * c * f(x + i as f64 * s);
        c = c * (k - i) as f64 / (i + 1) as f64;
    }
    acc / s.powi(k as i32)
}

impl CutoffFunction {
    /// Probes one-sided difference quotients of orders `1..=6` on both
    /// sides of `t = 1/2` and `t = 1`. An order counts as continuous when
    /// the jump between the two sides shrinks as the step is halved.
    pub fn probe() -> Self {
        let mut witness = 0;
        'orders: for k in 1..=MAX_PROBED_ORDER {
            for j in [0.5, 1.0] {
                let mut prev = f64::INFINITY;
                for s in [0.04, 0.02, 0.01] {
                    let right = forward_difference(cutoff_h, j, s, k);
                    let left = forward_difference(cutoff_h, j - k as f64 * s, s, k);
                    let jump = (right - left).abs();
                    if !jump.is_finite() || jump > prev + 1e-9 {
                        break 'orders;
                    }
                    prev = jump;
                }
            }
            witness = k;
        }
        CutoffFunction { smoothness_witness: witness }
    }

    pub fn eval(&self, t: f64) -> f64 {
        cutoff_h(t)
    }
}

/// Zonal evaluator of `Phi_L(x, y) = sum_j h(ell_j/L) phi_j(x) phi_j(y)`.
pub fn phi_zonal(kind: ManifoldKind, level: f64) -> ZonalKernel {
    ZonalKernel::new(kind, level, |ell| cutoff_h(ell / level))
}

fn require_frequencies(basis: &SpectralBasis, level: f64) -> Result<()> {
    // h(ell/L) vanishes for ell >= L, so a basis of level L is complete
    if level >= 1.0 {
        basis.require_level(level)?;
    }
    Ok(())
}

/// `Phi_L(x, y)` by direct summation over the basis.
pub fn phi_kernel(basis: &SpectralBasis, level: f64, x: &Point, y: &Point) -> Result<f64> {
    if !(level > 0.0) {
        return Err(MzError::InvalidLevel(level));
    }
    require_frequencies(basis, level)?;
    let n = basis.dim(level.max(1.0));
    let a = basis.eval_all(x, n);
    let b = basis.eval_all(y, n);
    Ok(basis.entries[..n].iter().zip(a.iter().zip(&b)).map(|(e, (u, v))| cutoff_h(e.ell / level) * u * v).sum())
}

/// `sigma_L(f) = sum_j h(ell_j/L) f^(j) phi_j`, with the Fourier
/// coefficients `f^(j)` computed by `rule` from the node values `f`.
pub fn sigma_op(basis: Arc<SpectralBasis>, level: f64, rule: &ReferenceQuadrature, f: &[f64]) -> Result<DiffusionPolynomial> {
    if !(level >= 1.0) {
        return Err(MzError::InvalidLevel(level));
    }
    let need = 2 * level_degree(basis.kind, level);
    if rule.exact_degree < need {
        return Err(MzError::InsufficientQuadrature {
            available: rule.exact_degree,
            required: need,
        });
    }
    let atoms: Vec<(Point, f64)> = rule.nodes.iter().copied().zip(rule.weights.iter().copied()).collect();
    weighted_sigma(basis, level, &atoms, f)
}

fn weighted_sigma(basis: Arc<SpectralBasis>, level: f64, atoms: &[(Point, f64)], f: &[f64]) -> Result<DiffusionPolynomial> {
    if atoms.len() != f.len() {
        return Err(MzError::DimensionMismatch(format!("{} values for {} nodes", f.len(), atoms.len())));
    }
    require_frequencies(&basis, level)?;
    let n = basis.dim(level);
    let coeffs = atoms
        .par_chunks(1024)
        .zip(f.par_chunks(1024))
        .map(|(chunk, fv)| {
            let mut acc = vec![0.0; n];
            let mut buf = Vec::new();
            for ((y, w), fy) in chunk.iter().zip(fv) {
                basis.eval_into(y, n, &mut buf);
                let s = w * fy;
                for (a, v) in acc.iter_mut().zip(&buf) {
                    *a += s * v;
                }
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(vec![0.0; n], |mut a, b| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            a
        });
    let coeffs = basis.entries[..n].iter().zip(coeffs).map(|(e, c)| cutoff_h(e.ell / level) * c).collect();
    DiffusionPolynomial::new(basis, level, coeffs)
}

/// `x -> int Phi_L(x, y) f(y) dnu(y)`. For atomic `nu` the values `f` are
/// given at the atoms, for densities at the nodes of `nu.discretize(L)`.
pub fn sigma_discrete(basis: Arc<SpectralBasis>, level: f64, nu: &SignedMeasure, f: &[f64]) -> Result<DiffusionPolynomial> {
    if !(level >= 1.0) {
        return Err(MzError::InvalidLevel(level));
    }
    if nu.kind() != basis.kind {
        return Err(MzError::ManifoldMismatch {
            expected: basis.kind.to_string(),
            found: nu.kind().to_string(),
        });
    }
    let atoms = nu.discretize(level);
    if atoms.len() != f.len() {
        let what = if nu.is_atomic() { "atoms" } else { "density sample nodes" };
        return Err(MzError::DimensionMismatch(format!("{} values for {} {what}", f.len(), atoms.len())));
    }
    weighted_sigma(basis, level, &atoms, f)
}

/// Spectral groups `(ell, multiplicity)` with `ell <= cap`, where a group
/// is a set of basis functions sharing one addition-theorem term.
fn spectral_groups(kind: ManifoldKind, cap: f64) -> Vec<(f64, f64)> {
    let mut g = Vec::new();
    match kind {
        ManifoldKind::Circle => {
            for k in 0..=(cap.floor() as usize) {
                g.push(((k as f64).max(1.0), if k == 0 { 1.0 } else { 2.0 }));
            }
        }
        ManifoldKind::Sphere2 => {
            let mut l = 0usize;
            loop {
                let ell = ((l * (l + 1)) as f64).sqrt().max(1.0);
                if ell > cap {
                    break;
                }
                g.push((ell, (2 * l + 1) as f64));
                l += 1;
            }
        }
        ManifoldKind::Torus2 => {
            let k = cap.floor() as usize;
            for k1 in 0..=k {
                for k2 in 0..=k {
                    let r = ((k1 * k1 + k2 * k2) as f64).sqrt();
                    if r <= cap {
                        let m = if k1 == 0 { 1.0 } else { 2.0 } * if k2 == 0 { 1.0 } else { 2.0 };
                        g.push((r.max(1.0), m));
                    }
                }
            }
        }
    }
    g.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    g
}

/// Smallest truncation level `Lambda` whose tail bound
/// `sum_{ell_j > Lambda} exp(-ell_j^2 t) |phi_j(x)| |phi_j(y)|` is at most
/// `tol`. Each group contributes at most its multiplicity, because the
/// Christoffel function of a group is constant and equal to its size.
pub fn heat_truncation_level(kind: ManifoldKind, t: f64, tol: f64) -> (f64, f64) {
    // beyond this cap every remaining term is below tol * e^-60
    let cap = (((1.0 / tol).ln().max(0.0) + 60.0) / t).sqrt() + 2.0;
    let groups = spectral_groups(kind, cap);
    let mut suffix = vec![0.0; groups.len() + 1];
    for i in (0..groups.len()).rev() {
        let (ell, m) = groups[i];
        suffix[i] = suffix[i + 1] + m * (-ell * ell * t).exp();
    }
    for i in 0..groups.len() {
        // truncating at groups[i].0 keeps every group with the same ell
        let mut j = i;
        while j < groups.len() && groups[j].0 <= groups[i].0 + LEVEL_EPS {
            j += 1;
        }
        if suffix[j] <= tol {
            return (groups[i].0, suffix[j]);
        }
    }
    (cap, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatValue {
    pub value: f64,
    pub level: f64,
    pub tail_bound: f64,
}

/// Truncated heat kernel evaluator for a fixed time.
#[derive(Clone, Debug)]
pub struct HeatKernel {
    pub t: f64,
    pub level: f64,
    pub tail_bound: f64,
    zonal: ZonalKernel,
}

impl HeatKernel {
    pub fn new(kind: ManifoldKind, t: f64, tol: f64, max_level: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(invalid("t", format!("heat time must be positive, got {t}")));
        }
        if !(tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        let (level, tail_bound) = heat_truncation_level(kind, t, tol);
        if level > max_level + LEVEL_EPS {
            return Err(MzError::TruncationUnachievable {
                tol,
                max_level: max_level.floor() as usize,
            });
        }
        Ok(HeatKernel {
            t,
            level,
            tail_bound,
            zonal: ZonalKernel::new(kind, level, |ell| (-ell * ell * t).exp()),
        })
    }

    pub fn eval(&self, x: &Point, y: &Point) -> f64 {
        self.zonal.eval(x, y)
    }

    pub fn zonal(&self) -> &ZonalKernel {
        &self.zonal
    }
}

/// `K_t(x, y)`, truncated where the tail bound drops below `tol`; fails
/// when that level exceeds the level of `basis`.
pub fn heat_kernel(basis: &SpectralBasis, t: f64, x: &Point, y: &Point, tol: f64) -> Result<HeatValue> {
    let k = HeatKernel::new(basis.kind, t, tol, basis.level)?;
    Ok(HeatValue {
        value: k.eval(x, y),
        level: k.level,
        tail_bound: k.tail_bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationOptions {
    pub levels: Vec<f64>,
    /// Values of `S`; empty means `alpha+1 ..= alpha+6`.
    pub s_values: Vec<u32>,
    /// Probe points per distance `1/L`.
    pub points_per_inv_level: usize,
    pub heat_times: Vec<f64>,
}

impl Default for LocalizationOptions {
    fn default() -> Self {
        LocalizationOptions {
            levels: vec![16.0, 32.0, 64.0],
            s_values: Vec::new(),
            points_per_inv_level: 16,
            heat_times: vec![0.2, 0.1, 0.05, 0.02],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationConstant {
    pub s: u32,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRow {
    pub level: f64,
    /// `sup_x int |Phi_L(x, .)| dmu`.
    pub l1_norm: f64,
    pub c_s: Vec<LocalizationConstant>,
    pub beta_hat: f64,
    /// Range of `Christoffel(L, x) / L^alpha` over the sample centers.
    pub christoffel_band: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatFit {
    pub times: Vec<f64>,
    pub kappa2: f64,
    pub kappa3: f64,
    pub kappa4: f64,
    /// Fraction of probes violating the Gaussian upper bound at the fit.
    pub violation_fraction: f64,
    /// `int K_t(x, .) dmu`, which equals `exp(-t)` under `ell_0 = 1`.
    pub integral_raw: Vec<f64>,
    /// `exp(t) int K_t(x, .) dmu`, the value for `ell_0 = 0`.
    pub integral_rescaled: Vec<f64>,
    pub gradient_kappa2: f64,
    pub gradient_violation_fraction: f64,
    /// True on the circle (analytic derivative), false when the gradient
    /// is estimated by finite differences.
    pub gradient_analytic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelProbeReport {
    pub manifold: ManifoldKind,
    pub levels: Vec<f64>,
    pub s_values: Vec<u32>,
    pub points_per_inv_level: usize,
    pub rows: Vec<LocalizationRow>,
    pub heat: HeatFit,
}

impl KernelProbeReport {
    /// Largest ratio of `c(S)` across the probed levels.
    pub fn c_stability(&self, s: u32) -> f64 {
        let v: Vec<f64> = self.rows.iter().filter_map(|r| r.c_s.iter().find(|c| c.s == s).map(|c| c.c)).collect();
        let max = v.iter().copied().fold(0.0, f64::max);
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }

    pub fn l1_ratio(&self) -> f64 {
        let max = self.rows.iter().map(|r| r.l1_norm).fold(0.0, f64::max);
        let min = self.rows.iter().map(|r| r.l1_norm).fold(f64::INFINITY, f64::min);
        max / min
    }

    pub fn min_beta_hat(&self) -> f64 {
        self.rows.iter().map(|r| r.beta_hat).fold(f64::INFINITY, f64::min)
    }
}

/// Distance samples `(rho, measure weight, kernel offsets)` around a
/// fixed center, with weights integrating against `mu`.
struct DistanceProbe {
    rho: Vec<f64>,
    weight: Vec<f64>,
    offsets: Vec<(f64, f64)>,
}

fn distance_probe(kind: ManifoldKind, spacing: f64) -> DistanceProbe {
    let n = (PI / spacing).ceil() as usize;
    let h = PI / n as f64;
    let trap = |i: usize| if i == 0 || i == n { 0.5 } else { 1.0 };
    let mut p = DistanceProbe {
        rho: Vec::new(),
        weight: Vec::new(),
        offsets: Vec::new(),
    };
    match kind {
        ManifoldKind::Circle | ManifoldKind::Sphere2 => {
            for i in 0..=n {
                let r = h * i as f64;
                p.rho.push(r);
                let w = if kind == ManifoldKind::Circle { trap(i) * h / PI } else { trap(i) * h * r.sin() / 2.0 };
                p.weight.push(w);
                p.offsets.push((r, 0.0));
            }
        }
        ManifoldKind::Torus2 => {
            for i in 0..=n {
                for j in 0..=n {
                    let (a, b) = (h * i as f64, h * j as f64);
                    p.rho.push(a.hypot(b));
                    p.weight.push(trap(i) * trap(j) * h * h / (PI * PI));
                    p.offsets.push((a, b));
                }
            }
        }
    }
    p
}

fn zonal_at(z: &ZonalKernel, o: (f64, f64)) -> f64 {
    match z.kind() {
        ManifoldKind::Circle => z.eval_circle(o.0),
        ManifoldKind::Sphere2 => z.eval_sphere(o.0),
        ManifoldKind::Torus2 => z.eval_torus(o.0, o.1),
    }
}

/// Largest admissible torus probe resolution per axis.
const TORUS_AXIS_CAP: usize = 1024;

/// Localization, `L^1`, lower-bound and heat-kernel probes.
///
/// The model manifolds are homogeneous, so every kernel here depends only
/// on the offset from the center; one center carries the supremum over
/// `x`.
pub fn localization_report(basis: &SpectralBasis, opts: &LocalizationOptions) -> Result<KernelProbeReport> {
    let kind = basis.kind;
    let m = Manifold::new(kind);
    let alpha = m.alpha();
    let s_values: Vec<u32> = if opts.s_values.is_empty() {
        (1..=6).map(|k| alpha as u32 + k).collect()
    } else {
        opts.s_values.clone()
    };
    if let Some(&s) = s_values.iter().find(|&&s| (s as f64) <= alpha) {
        return Err(invalid("S", format!("S = {s} must exceed alpha = {alpha}")));
    }
    if opts.levels.is_empty() {
        return Err(invalid("levels", "no levels to probe"));
    }
    let centers = m.grid(1.0);
    let centers = [centers[0], centers[centers.len() / 3], centers[2 * centers.len() / 3]];
    let mut rows = Vec::new();
    for &level in &opts.levels {
        if !(level >= 1.0) {
            return Err(MzError::InvalidLevel(level));
        }
        if opts.points_per_inv_level < 8 {
            return Err(MzError::ProbeTooCoarse {
                spacing: 1.0 / (opts.points_per_inv_level.max(1) as f64 * level),
                limit: 1.0 / (8.0 * level),
            });
        }
        basis.require_level(level)?;
        let mut spacing = 1.0 / (opts.points_per_inv_level as f64 * level);
        if kind == ManifoldKind::Torus2 {
            spacing = spacing.max(PI / TORUS_AXIS_CAP as f64);
            if spacing > 1.0 / (8.0 * level) {
                return Err(MzError::ProbeTooCoarse {
                    spacing,
                    limit: 1.0 / (8.0 * level),
                });
            }
        }
        let z = phi_zonal(kind, level);
        let probe = distance_probe(kind, spacing);
        let vals: Vec<f64> = probe.offsets.par_iter().map(|&o| zonal_at(&z, o)).collect();
        let l1_norm: f64 = vals.iter().zip(&probe.weight).map(|(v, w)| v.abs() * w).sum();
        let la = level.powf(alpha);
        let c_s = s_values
            .iter()
            .map(|&s| {
                let c = vals
                    .iter()
                    .zip(&probe.rho)
                    .map(|(v, r)| v.abs() * (level * r).powi(s as i32).max(1.0) / la)
                    .fold(0.0, f64::max);
                LocalizationConstant { s, c }
            })
            .collect();
        let diag = zonal_at(&z, (0.0, 0.0));
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| probe.rho[a].partial_cmp(&probe.rho[b]).unwrap());
        let mut beta_hat: f64 = 0.0;
        for &i in &order {
            let r = probe.rho[i];
            if level * r > 0.5 {
                beta_hat = 0.5;
                break;
            }
            if vals[i].abs() < 0.5 * diag {
                break;
            }
            beta_hat = beta_hat.max(level * r);
        }
        let mut band = (f64::INFINITY, 0.0f64);
        for c in &centers {
            let v = christoffel(basis, level, c)? / la;
            band = (band.0.min(v), band.1.max(v));
        }
        rows.push(LocalizationRow {
            level,
            l1_norm,
            c_s,
            beta_hat,
            christoffel_band: band,
        });
    }
    let heat = heat_fit(kind, &opts.heat_times)?;
    Ok(KernelProbeReport {
        manifold: kind,
        levels: opts.levels.clone(),
        s_values,
        points_per_inv_level: opts.points_per_inv_level,
        rows,
        heat,
    })
}

fn quantile(mut v: Vec<f64>, q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let i = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[i]
}

/// Heat-kernel truncation tolerance used by the probes.
const PROBE_HEAT_TOL: f64 = 1e-14;

/// Allowed ratio between the fitted Gaussian prefactor and the diagonal peak.
const KAPPA2_PEAK_FACTOR: f64 = 10.0;

fn heat_fit(kind: ManifoldKind, times: &[f64]) -> Result<HeatFit> {
    if times.is_empty() {
        return Err(invalid("heat_times", "no times to probe"));
    }
    let m = Manifold::new(kind);
    let alpha = m.alpha();
    let spacing = if kind == ManifoldKind::Torus2 { PI / 96.0 } else { PI / 512.0 };
    let probe = distance_probe(kind, spacing);
    // (t, rho, |K| t^{a/2}, |grad K| t^{(a+1)/2})
    let mut samples = Vec::new();
    let mut integral_raw = Vec::new();
    let mut diag = Vec::new();
    for &t in times {
        let k = HeatKernel::new(kind, t, PROBE_HEAT_TOL, f64::INFINITY)?;
        let z = k.zonal();
        let scale = t.powf(alpha / 2.0);
        let gscale = t.powf((alpha + 1.0) / 2.0);
        let rows: Vec<(f64, f64, f64, f64)> = probe
            .offsets
            .par_iter()
            .zip(&probe.rho)
            .map(|(&o, &r)| {
                let v = zonal_at(z, o);
                let g = heat_gradient(kind, t, k.level, z, o);
                (t, r, v.abs() * scale, g * gscale)
            })
            .collect();
        diag.push(zonal_at(z, (0.0, 0.0)) * scale);
        let rule = ReferenceQuadrature::exact_to(&m, level_degree(kind, k.level));
        let x0 = m.grid(1.0)[0];
        integral_raw.push(rule.integrate(|y| k.eval(&x0, y)));
        samples.extend(rows);
    }
    let peak = diag.iter().copied().fold(0.0, f64::max);
    let kappa4 = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let gmax = samples.iter().map(|s| s.2).fold(0.0, f64::max);
    // least squares on the non-flat samples: log g = log k2 - k3 rho^2 / t
    let fit: Vec<&(f64, f64, f64, f64)> = samples.iter().filter(|s| s.2 > 1e-12 * gmax && s.1 > 0.0).collect();
    let xs: Vec<f64> = fit.iter().map(|s| -s.1 * s.1 / s.0).collect();
    let ys: Vec<f64> = fit.iter().map(|s| s.2.ln()).collect();
    let mut kappa3 = ls_slope(&xs, &ys).max(1e-6);
    let prefactor = |k3: f64, sel: fn(&(f64, f64, f64, f64)) -> f64| -> f64 {
        let ratios: Vec<f64> = samples.iter().map(|s| sel(s) * (k3 * s.1 * s.1 / s.0).exp()).collect();
        quantile(ratios, 0.999)
    };
    let mut kappa2 = prefactor(kappa3, |s| s.2);
    for _ in 0..100 {
        if kappa2.is_finite() && kappa2 <= KAPPA2_PEAK_FACTOR * peak {
            break;
        }
        kappa3 *= 0.8;
        kappa2 = prefactor(kappa3, |s| s.2);
    }
    let violations = |k2: f64, sel: fn(&(f64, f64, f64, f64)) -> f64| -> f64 {
        let bad = samples.iter().filter(|s| sel(s) > k2 * (-kappa3 * s.1 * s.1 / s.0).exp() * (1.0 + 1e-12)).count();
        bad as f64 / samples.len() as f64
    };
    let gradient_kappa2 = prefactor(kappa3, |s| s.3);
    Ok(HeatFit {
        times: times.to_vec(),
        kappa2,
        kappa3,
        kappa4,
        violation_fraction: violations(kappa2, |s| s.2),
        integral_rescaled: times.iter().zip(&integral_raw).map(|(t, v)| t.exp() * v).collect(),
        integral_raw,
        gradient_kappa2,
        gradient_violation_fraction: violations(gradient_kappa2, |s| s.3),
        gradient_analytic: kind == ManifoldKind::Circle,
    })
}

/// Step of the finite-difference gradient estimate on the sphere and torus.
const FD_STEP: f64 = 1e-5;

/// `|grad_y K_t(x, y)|` at the given offset.
fn heat_gradient(kind: ManifoldKind, t: f64, level: f64, z: &ZonalKernel, o: (f64, f64)) -> f64 {
    match kind {
        ManifoldKind::Circle => {
            let kmax = level.floor() as usize;
            (1..=kmax).map(|k| 2.0 * k as f64 * (-((k * k) as f64) * t).exp() * (k as f64 * o.0).sin()).sum::<f64>().abs()
        }
        ManifoldKind::Sphere2 => {
            if o.0 < FD_STEP {
                return (z.eval_sphere(o.0 + FD_STEP) - z.eval_sphere(o.0)).abs() / FD_STEP;
            }
            (z.eval_sphere(o.0 + FD_STEP) - z.eval_sphere(o.0 - FD_STEP)).abs() / (2.0 * FD_STEP)
        }
        ManifoldKind::Torus2 => {
            let g1 = (z.eval_torus(o.0 + FD_STEP, o.1) - z.eval_torus(o.0 - FD_STEP, o.1)) / (2.0 * FD_STEP);
            let g2 = (z.eval_torus(o.0, o.1 + FD_STEP) - z.eval_torus(o.0, o.1 - FD_STEP)) / (2.0 * FD_STEP);
            g1.hypot(g2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::eigen_system;
    use crate::polynomials::{norm_p, random_polynomial, NormMeasure};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn basis(m: &Manifold, level: f64) -> Arc<SpectralBasis> {
        Arc::new(eigen_system(m, level).unwrap())
    }

    #[test]
    fn cutoff_examples() {
        assert_eq!(cutoff_h(0.3), 1.0);
        assert_eq!(cutoff_h(1.2), 0.0);
        assert_eq!(cutoff_h(-0.75), cutoff_h(0.75));
        assert_eq!(cutoff_h(0.5), 1.0);
        assert_eq!(cutoff_h(1.0), 0.0);
        assert_abs_diff_eq!(cutoff_h(0.75), 0.5, epsilon = 1e-12);
        let mut prev = 1.0;
        for i in 0..=2000 {
            let v = cutoff_h(0.5 + i as f64 / 4000.0);
            assert!((0.0..=1.0).contains(&v));
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        assert_eq!(CutoffFunction::probe().smoothness_witness, MAX_PROBED_ORDER);
    }

    #[test]
    fn phi_examples() {
        let m = Manifold::circle();
        for level in [4.0, 7.5, 16.0] {
            let b = basis(&m, level);
            let x = Point::circle(0.4);
            let v = phi_kernel(&b, level, &x, &x).unwrap();
            let closed: f64 = 1.0 + 2.0 * (1..=level as usize).map(|k| cutoff_h(k as f64 / level)).sum::<f64>();
            assert_abs_diff_eq!(v, closed, epsilon = 1e-12);
            assert!(v >= 2.0 * (level / 2.0).floor() + 1.0);
            assert_abs_diff_eq!(phi_zonal(m.kind, level).eval(&x, &x), v, epsilon = 1e-10);
        }
        let b = basis(&m, 4.0);
        assert_abs_diff_eq!(phi_kernel(&b, 0.8, &Point::circle(0.0), &Point::circle(2.0)).unwrap(), cutoff_h(1.0 / 0.8), epsilon = 1e-15);
        assert_abs_diff_eq!(phi_kernel(&b, 0.6, &Point::circle(0.0), &Point::circle(2.0)).unwrap(), cutoff_h(1.0 / 0.6), epsilon = 1e-15);
        assert!(matches!(phi_kernel(&b, 8.0, &Point::circle(0.0), &Point::circle(0.0)), Err(MzError::BasisTruncated { .. })));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in [Manifold::circle(), Manifold::sphere(), Manifold::torus()] {
            let b = basis(&m, 6.0);
            let z = phi_zonal(m.kind, 6.0);
            for _ in 0..20 {
                let (x, y) = (m.random_point(&mut rng), m.random_point(&mut rng));
                let a = phi_kernel(&b, 6.0, &x, &y).unwrap();
                assert_abs_diff_eq!(a, phi_kernel(&b, 6.0, &y, &x).unwrap(), epsilon = 1e-12);
                assert_abs_diff_eq!(a, z.eval(&x, &y), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn sigma_reproduces_polynomials() {
        for m in [Manifold::circle(), Manifold::sphere(), Manifold::torus()] {
            let level = 4.0;
            let b = basis(&m, 2.0 * level);
            let rule = ReferenceQuadrature::for_level(&m, 2.0 * level).unwrap();
            for seed in 0..50 {
                let p = random_polynomial(b.clone(), level, seed).unwrap();
                let f = p.eval_many(&rule.nodes);
                let s = sigma_op(b.clone(), 2.0 * level, &rule, &f).unwrap();
                let mut err = 0.0;
                for (i, c) in s.coeffs.iter().enumerate() {
                    let want = p.coeffs.get(i).copied().unwrap_or(0.0);
                    err += (c - want).powi(2);
                }
                assert!(err.sqrt() <= 1e-10, "{} seed {seed}: {}", m.kind, err.sqrt());
            }
        }
    }

    #[test]
    fn sigma_single_frequency_and_errors() {
        let m = Manifold::circle();
        let b = basis(&m, 16.0);
        let rule = ReferenceQuadrature::for_level(&m, 16.0).unwrap();
        for k in [11, 13, 17, 20] {
            // basis index of cos(freq t) has frequency (k+1)/2
            let freq = (k + 1) / 2;
            let f: Vec<f64> = rule.nodes.iter().map(|x| b.eval(k, x)).collect();
            let s = sigma_op(b.clone(), 8.0, &rule, &f).unwrap();
            for (j, c) in s.coeffs.iter().enumerate() {
                let want = if j == k { cutoff_h(freq as f64 / 8.0) } else { 0.0 };
                assert_abs_diff_eq!(*c, want, epsilon = 1e-12);
            }
        }
        let coarse = ReferenceQuadrature::exact_to(&m, 10);
        let f = vec![0.0; coarse.len()];
        assert!(matches!(sigma_op(b.clone(), 8.0, &coarse, &f), Err(MzError::InsufficientQuadrature { .. })));
    }

    fn square_wave(x: &Point) -> f64 {
        if x.coords()[0].rem_euclid(std::f64::consts::TAU) < PI {
            1.0
        } else {
            -1.0
        }
    }

    #[test]
    fn sigma_young_bound() {
        let m = Manifold::circle();
        let b = basis(&m, 64.0);
        let rule = ReferenceQuadrature::dense(&m, 64.0);
        let f: Vec<f64> = rule.nodes.iter().map(square_wave).collect();
        let mut worst: f64 = 0.0;
        for level in [8.0, 16.0, 32.0, 64.0] {
            let s = sigma_op(b.clone(), level, &rule, &f).unwrap();
            // |f| = 1, so every L^p norm of f equals 1
            for p in [1.0, 2.0, f64::INFINITY] {
                worst = worst.max(norm_p(&s, NormMeasure::Mu, p).unwrap());
            }
        }
        assert!(worst.is_finite() && worst < 2.0, "fitted Young constant {worst}");
    }

    #[test]
    fn sigma_discrete_examples() {
        let m = Manifold::sphere();
        let level = 3.0;
        let b = basis(&m, 2.0 * level);
        let rule = ReferenceQuadrature::for_level(&m, 2.0 * level).unwrap();
        let nu = SignedMeasure::atomic(m.kind, rule.nodes.iter().copied().zip(rule.weights.iter().copied()).collect());
        let p = random_polynomial(b.clone(), level, 3).unwrap();
        let f = p.eval_many(&rule.nodes);
        let a = sigma_discrete(b.clone(), level, &nu, &f).unwrap();
        let c = sigma_op(b.clone(), level, &rule, &f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let x = m.random_point(&mut rng);
            assert_abs_diff_eq!(a.eval(&x), c.eval(&x), epsilon = 1e-10);
        }
        let y0 = Point::sphere(0.7, 2.0);
        let single = SignedMeasure::atomic(m.kind, vec![(y0, 1.0)]);
        let s = sigma_discrete(b.clone(), level, &single, &[2.5]).unwrap();
        for _ in 0..10 {
            let x = m.random_point(&mut rng);
            assert_abs_diff_eq!(s.eval(&x), 2.5 * phi_kernel(&b, level, &x, &y0).unwrap(), epsilon = 1e-10);
        }
        assert!(matches!(sigma_discrete(b.clone(), level, &single, &[1.0, 2.0]), Err(MzError::DimensionMismatch(_))));
        assert!(matches!(sigma_discrete(b, level, &SignedMeasure::uniform(m.kind), &[1.0]), Err(MzError::DimensionMismatch(_))));
    }

    #[test]
    fn sigma_discrete_jittered_quadrature() {
        // equal weights on jittered equispaced nodes integrate Pi_{2L}
        // products only approximately; the reproduction error stays small
        let m = Manifold::circle();
        let level = 8.0;
        let b = basis(&m, 2.0 * level);
        let n = 400;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let nodes: Vec<(Point, f64)> = (0..n)
            .map(|k| {
                let j: f64 = rand::Rng::random_range(&mut rng, -0.1..0.1);
                (Point::circle(std::f64::consts::TAU * (k as f64 + j) / n as f64), 1.0 / n as f64)
            })
            .collect();
        let tau = SignedMeasure::atomic(m.kind, nodes.clone());
        let p = random_polynomial(b.clone(), level, 2).unwrap();
        let f: Vec<f64> = nodes.iter().map(|a| p.eval(&a.0)).collect();
        let s = sigma_discrete(b.clone(), 2.0 * level, &tau, &f).unwrap();
        let mut diff = s.clone();
        for (i, c) in diff.coeffs.iter_mut().enumerate() {
            *c -= p.coeffs.get(i).copied().unwrap_or(0.0);
        }
        let rel = norm_p(&diff, NormMeasure::Mu, f64::INFINITY).unwrap() / norm_p(&p, NormMeasure::Mu, f64::INFINITY).unwrap();
        assert!(rel < 0.05, "relative sup error {rel}");
    }

    #[test]
    fn heat_examples() {
        let m = Manifold::circle();
        let b = eigen_system(&m, 200.0).unwrap();
        let x = Point::circle(0.3);
        let big = heat_kernel(&b, 40.0, &x, &Point::circle(2.0), 1e-12).unwrap();
        assert_abs_diff_eq!(big.value, (-40f64).exp(), epsilon = 1e-12);
        let v = heat_kernel(&b, 0.01, &x, &x, 1e-12).unwrap();
        let oracle: f64 = (-0.01f64).exp() + 2.0 * (1..=100_000u64).map(|k| (-((k * k) as f64) * 0.01).exp()).sum::<f64>();
        assert_abs_diff_eq!(v.value, oracle, epsilon = 1e-8);
        assert!(v.level <= 200.0 && v.tail_bound <= 1e-12);
        let y = Point::circle(1.1);
        assert_abs_diff_eq!(heat_kernel(&b, 0.05, &x, &y, 1e-12).unwrap().value, heat_kernel(&b, 0.05, &y, &x, 1e-12).unwrap().value, epsilon = 1e-12);
        assert!(heat_kernel(&b, 0.0, &x, &y, 1e-12).is_err());
        let small = eigen_system(&m, 5.0).unwrap();
        assert!(matches!(heat_kernel(&small, 0.001, &x, &y, 1e-12), Err(MzError::TruncationUnachievable { .. })));
        for m in [Manifold::sphere(), Manifold::torus()] {
            let b = eigen_system(&m, 60.0).unwrap();
            let x = m.grid(1.0)[1];
            let v = heat_kernel(&b, 30.0, &x, &m.grid(1.0)[4], 1e-12).unwrap();
            assert_abs_diff_eq!(v.value, (-30f64).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn heat_direct_sum_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for m in [Manifold::sphere(), Manifold::torus()] {
            let b = eigen_system(&m, 30.0).unwrap();
            let (x, y) = (m.random_point(&mut rng), m.random_point(&mut rng));
            let v = heat_kernel(&b, 0.1, &x, &y, 1e-10).unwrap();
            let n = b.dim(v.level);
            let (a, c) = (b.eval_all(&x, n), b.eval_all(&y, n));
            let direct: f64 = (0..n).map(|j| (-b.entries[j].ell.powi(2) * 0.1).exp() * a[j] * c[j]).sum();
            assert_abs_diff_eq!(v.value, direct, epsilon = 1e-9);
        }
    }

    #[test]
    fn circle_localization_report() {
        let m = Manifold::circle();
        let b = eigen_system(&m, 64.0).unwrap();
        let rep = localization_report(&b, &LocalizationOptions::default()).unwrap();
        assert_eq!(rep.s_values, vec![2, 3, 4, 5, 6, 7]);
        assert!(rep.c_stability(5) <= 2.0, "c(5) ratio {}", rep.c_stability(5));
        assert!(rep.l1_ratio() <= 1.1, "L1 ratio {}", rep.l1_ratio());
        assert!(rep.min_beta_hat() >= 0.1 && rep.min_beta_hat() <= 0.5);
        for r in &rep.rows {
            let want = (2.0 * r.level + 1.0) / r.level;
            assert_abs_diff_eq!(r.christoffel_band.0, want, epsilon = 1e-12);
            assert_abs_diff_eq!(r.christoffel_band.1, want, epsilon = 1e-12);
            assert!(r.c_s.iter().all(|c| c.c.is_finite() && c.c > 0.0));
        }
        let h = &rep.heat;
        assert!(h.kappa2 > 0.0 && h.kappa3 > 0.0 && h.kappa4 > 0.0);
        assert!(h.violation_fraction <= 1e-3);
        assert!(h.gradient_analytic && h.gradient_kappa2.is_finite() && h.gradient_kappa2 > 0.0);
        for (t, (raw, res)) in h.times.iter().zip(h.integral_raw.iter().zip(&h.integral_rescaled)) {
            assert_abs_diff_eq!(*raw, (-t).exp(), epsilon = 1e-12);
            assert_abs_diff_eq!(*res, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sphere_and_torus_reports() {
        for m in [Manifold::sphere(), Manifold::torus()] {
            let b = eigen_system(&m, 16.0).unwrap();
            let opts = LocalizationOptions {
                levels: vec![8.0, 16.0],
                points_per_inv_level: 8,
                ..Default::default()
            };
            let rep = localization_report(&b, &opts).unwrap();
            assert_eq!(rep.s_values[0], 3);
            for r in &rep.rows {
                assert!(r.l1_norm.is_finite() && r.l1_norm > 0.0);
                assert!(r.beta_hat > 0.0 && r.beta_hat <= 0.5);
                assert!((r.christoffel_band.1 - r.christoffel_band.0) / r.christoffel_band.1 < 0.05);
            }
            assert!(rep.heat.kappa4 > 0.0 && rep.heat.violation_fraction <= 1e-3);
            assert!(!rep.heat.gradient_analytic);
        }
    }

    #[test]
    fn report_errors() {
        let b = eigen_system(&Manifold::circle(), 32.0).unwrap();
        let coarse = LocalizationOptions {
            points_per_inv_level: 4,
            ..Default::default()
        };
        assert!(matches!(localization_report(&b, &coarse), Err(MzError::ProbeTooCoarse { .. })));
        let bad_s = LocalizationOptions {
            levels: vec![16.0],
            s_values: vec![1],
            ..Default::default()
        };
        assert!(matches!(localization_report(&b, &bad_s), Err(MzError::InvalidParameter { .. })));
    }
}
