//! Diffusion polynomials `P = sum_k a_k phi_k` and the classical
//! inequality probes (Nikolskii, Bernstein, Christoffel, product closure).

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, MzError, Result};
use crate::kernels::cutoff_h;
use crate::manifolds::{eigen_system, level_degree, Manifold, ManifoldKind, Point, ReferenceQuadrature, SpectralBasis};
use crate::measures::{SignedMeasure, SUPPORT_THRESHOLD};

/// A diffusion polynomial of level `level` over a shared basis.
#[derive(Clone, Debug)]
pub struct DiffusionPolynomial {
    pub basis: Arc<SpectralBasis>,
    pub level: f64,
    pub coeffs: Vec<f64>,
}

impl PartialEq for DiffusionPolynomial {
    fn eq(&self, other: &Self) -> bool {
        self.kind() == other.kind() && self.level == other.level && self.coeffs == other.coeffs
    }
}

/// Measure argument of [`norm_p`].
#[derive(Clone, Copy, Debug)]
pub enum NormMeasure<'a> {
    Mu,
    Nu(&'a SignedMeasure),
}

impl DiffusionPolynomial {
    pub fn new(basis: Arc<SpectralBasis>, level: f64, coeffs: Vec<f64>) -> Result<Self> {
        basis.require_level(level)?;
        let n = basis.dim(level);
        if coeffs.len() != n {
            return Err(MzError::DimensionMismatch(format!("{} coefficients for dim Pi_L = {n}", coeffs.len())));
        }
        Ok(DiffusionPolynomial { basis, level, coeffs })
    }

    pub fn zero(basis: Arc<SpectralBasis>, level: f64) -> Result<Self> {
        let n = basis.dim(level);
        Self::new(basis, level, vec![0.0; n])
    }

    /// `a_k phi_k` for a single basis index.
    pub fn basis_function(basis: Arc<SpectralBasis>, level: f64, k: usize) -> Result<Self> {
        let mut p = Self::zero(basis, level)?;
        if k >= p.coeffs.len() {
            return Err(invalid("k", format!("basis index {k} outside Pi_L")));
        }
        p.coeffs[k] = 1.0;
        Ok(p)
    }

    /// `Phi_L(x0, .)`, the localized kernel centered at `x0`.
    pub fn localized_kernel(basis: Arc<SpectralBasis>, level: f64, x0: &Point) -> Result<Self> {
        let n = basis.dim(level);
        let v = basis.eval_all(x0, n);
        let coeffs = basis.entries[..n].iter().zip(&v).map(|(e, v)| cutoff_h(e.ell / level) * v).collect();
        Self::new(basis, level, coeffs)
    }

    pub fn kind(&self) -> ManifoldKind {
        self.basis.kind
    }

    pub fn manifold(&self) -> Manifold {
        Manifold::new(self.basis.kind)
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, x: &Point) -> f64 {
        let v = self.basis.eval_all(x, self.dim());
        v.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn eval_many(&self, xs: &[Point]) -> Vec<f64> {
        let mut buf = Vec::new();
        xs.iter()
            .map(|x| {
                self.basis.eval_into(x, self.dim(), &mut buf);
                buf.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// Intrinsic gradient in the orthonormal frame of the basis.
    pub fn gradient(&self, x: &Point) -> [f64; 2] {
        let g = self.basis.gradients(x, self.dim());
        let mut out = [0.0; 2];
        for (gk, a) in g.iter().zip(&self.coeffs) {
            out[0] += a * gk[0];
            out[1] += a * gk[1];
        }
        out
    }

    /// `P'` on the circle.
    pub fn derivative(&self) -> Result<Self> {
        if self.kind() != ManifoldKind::Circle {
            return Err(invalid("derivative", "only defined on the circle"));
        }
        let mut c = vec![0.0; self.dim()];
        for k in 1..self.dim() {
            let f = k.div_ceil(2) as f64;
            if k % 2 == 1 {
                // sqrt2 cos(f t) -> -f sqrt2 sin(f t)
                if k + 1 < self.dim() {
                    c[k + 1] -= f * self.coeffs[k];
                }
            } else {
                c[k - 1] += f * self.coeffs[k];
            }
        }
        Self::new(self.basis.clone(), self.level, c)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut p = self.clone();
        p.coeffs.iter_mut().for_each(|c| *c *= s);
        p
    }

    /// `||P||_{mu;2}` by Parseval.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Text dump: basis id, level and full-precision coefficients.
    pub fn dump(&self) -> String {
        let mut s = format!("basis: {}\nlevel: {:?}\n", self.kind(), self.level);
        for c in &self.coeffs {
            s.push_str(&format!("{c:?}\n"));
        }
        s
    }
}

/// `|||grad P|||_x`.
pub fn gradient_norm_at(p: &DiffusionPolynomial, x: &Point) -> f64 {
    let g = p.gradient(x);
    g[0].hypot(g[1])
}

/// I.i.d. standard-normal coefficients from a seeded ChaCha8 generator.
pub fn random_polynomial(basis: Arc<SpectralBasis>, level: f64, seed: u64) -> Result<DiffusionPolynomial> {
    if !(level >= 1.0) {
        return Err(MzError::InvalidLevel(level));
    }
    let n = basis.dim(level);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    DiffusionPolynomial::new(basis, level, coeffs)
}

/// `(int |P|^p d|m|)`, the raw `p`-th power integral, for any `p > 0`.
pub fn lp_integral(p: &DiffusionPolynomial, m: NormMeasure<'_>, exponent: f64) -> Result<f64> {
    if !(exponent > 0.0) || !exponent.is_finite() {
        return Err(invalid("p", format!("raw integral needs finite p > 0, got {exponent}")));
    }
    let nodes = match m {
        NormMeasure::Mu => {
            if exponent == 2.0 {
                return Ok(p.coeffs.iter().map(|c| c * c).sum());
            }
            let rule = ReferenceQuadrature::dense(&p.manifold(), p.level);
            rule.nodes.into_iter().zip(rule.weights).collect()
        }
        NormMeasure::Nu(nu) => {
            check_kind(p, nu)?;
            nu.discretize(p.level)
        }
    };
    let pts: Vec<Point> = nodes.iter().map(|n| n.0).collect();
    let vals = p.eval_many(&pts);
    Ok(nodes.iter().zip(&vals).map(|((_, w), v)| w.abs() * v.abs().powf(exponent)).sum())
}

fn check_kind(p: &DiffusionPolynomial, nu: &SignedMeasure) -> Result<()> {
    if nu.kind() != p.kind() {
        return Err(MzError::ManifoldMismatch {
            expected: p.kind().to_string(),
            found: nu.kind().to_string(),
        });
    }
    Ok(())
}

/// `||P||_{m;p}` for `1 <= p <= inf` (`f64::INFINITY` for the sup norm).
pub fn norm_p(p: &DiffusionPolynomial, m: NormMeasure<'_>, exponent: f64) -> Result<f64> {
    if !(exponent >= 1.0) {
        return Err(invalid("p", format!("norms need p >= 1, got {exponent}")));
    }
    if exponent.is_infinite() {
        return match m {
            NormMeasure::Mu => Ok(sup_norm(p)),
            NormMeasure::Nu(nu) => {
                check_kind(p, nu)?;
                sup_norm_on(p, nu)
            }
        };
    }
    if exponent == 2.0 {
        if let NormMeasure::Mu = m {
            return Ok(p.l2_norm());
        }
    }
    Ok(lp_integral(p, m, exponent)?.powf(1.0 / exponent))
}

/// Samples per unit of level on the sup-norm grid (per coordinate).
const SUP_GRID_DENSITY: usize = 32;

/// `||P||_{mu;inf}`: grid maximum over at least `32 L` samples per
/// coordinate, refined around the leading candidates (golden section on
/// the circle, compass search elsewhere).
pub fn sup_norm(p: &DiffusionPolynomial) -> f64 {
    let m = p.manifold();
    let deg = level_degree(m.kind, p.level).max(1);
    match m.kind {
        ManifoldKind::Circle => {
            let n = (SUP_GRID_DENSITY * deg).max(64);
            let h = TAU / n as f64;
            let pts: Vec<Point> = (0..n).map(|i| Point::circle(h * i as f64)).collect();
            let v: Vec<f64> = p.eval_many(&pts).into_iter().map(f64::abs).collect();
            let gmax = v.iter().copied().fold(0.0, f64::max);
            let mut best = gmax;
            for i in 0..n {
                let (a, b) = (v[(i + n - 1) % n], v[(i + 1) % n]);
                if v[i] >= a && v[i] >= b && v[i] >= 0.5 * gmax {
                    let t0 = h * i as f64;
                    best = best.max(golden_max(|t| p.eval(&Point::circle(t)).abs(), t0 - h, t0 + h));
                }
            }
            best
        }
        _ => {
            let h = std::f64::consts::PI / (SUP_GRID_DENSITY * deg) as f64;
            let pts = m.grid(h);
            let v: Vec<f64> = p.eval_many(&pts).into_iter().map(f64::abs).collect();
            let mut order: Vec<usize> = (0..pts.len()).collect();
            order.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap().then(a.cmp(&b)));
            let mut best = v[order[0]];
            for &i in order.iter().take(8) {
                best = best.max(compass_max(&m, &|x| p.eval(x).abs(), pts[i], h));
            }
            best
        }
    }
}

/// Essential sup of `|P|` with respect to `|nu|`.
fn sup_norm_on(p: &DiffusionPolynomial, nu: &SignedMeasure) -> Result<f64> {
    match nu {
        SignedMeasure::Atomic { atoms, .. } => {
            let pts: Vec<Point> = atoms.iter().filter(|a| a.1 != 0.0).map(|a| a.0).collect();
            if pts.is_empty() {
                return Err(MzError::EmptySupport);
            }
            Ok(p.eval_many(&pts).into_iter().map(f64::abs).fold(0.0, f64::max))
        }
        _ => {
            let rule = ReferenceQuadrature::dense(&p.manifold(), p.level);
            let supp: Vec<Point> = rule
                .nodes
                .iter()
                .filter(|x| nu.density_at(x).unwrap_or(0.0).abs() > SUPPORT_THRESHOLD)
                .copied()
                .collect();
            if supp.is_empty() {
                return Err(MzError::EmptySupport);
            }
            if supp.len() == rule.nodes.len() {
                return Ok(sup_norm(p));
            }
            Ok(p.eval_many(&supp).into_iter().map(f64::abs).fold(0.0, f64::max))
        }
    }
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-14 {
            break;
        }
    }
    fc.max(fd).max(f((a + b) / 2.0))
}

/// Compass search for a local maximum of `f` starting at `x` with step `h`.
pub(crate) fn compass_max(m: &Manifold, f: &impl Fn(&Point) -> f64, mut x: Point, mut h: f64) -> f64 {
    let mut fx = f(&x);
    while h > 1e-11 {
        let mut moved = false;
        for k in 0..8 {
            let y = m.offset(&x, h, TAU * k as f64 / 8.0);
            let fy = f(&y);
            if fy > fx {
                x = y;
                fx = fy;
                moved = true;
                break;
            }
        }
        if !moved {
            h /= 2.0;
        }
    }
    fx
}

/// `sum_{ell_j <= L} |phi_j(x)|^2`.
pub fn christoffel(basis: &SpectralBasis, level: f64, x: &Point) -> Result<f64> {
    basis.require_level(level)?;
    let n = basis.dim(level);
    Ok(basis.eval_all(x, n).iter().map(|v| v * v).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NikolskiiRow {
    pub level: f64,
    pub worst_ratio: f64,
    pub kernel_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NikolskiiReport {
    pub p: f64,
    pub r: f64,
    pub rows: Vec<NikolskiiRow>,
    /// Least-squares slope of `log worst_ratio` against `log L`.
    pub fitted_slope: f64,
    /// `alpha (1/p - 1/r)`.
    pub claimed_slope: f64,
    /// True when `p < 1`: the "norms" are raw quadrature integrals.
    pub raw_integrals: bool,
}

fn quasi_norm(p: &DiffusionPolynomial, e: f64) -> Result<f64> {
    if e.is_infinite() {
        Ok(sup_norm(p))
    } else if e == 2.0 {
        Ok(p.l2_norm())
    } else {
        Ok(lp_integral(p, NormMeasure::Mu, e)?.powf(1.0 / e))
    }
}

/// Worst observed `||P||_r / ||P||_p` over random polynomials and the
/// localized kernel `Phi_L(x0, .)` at each level, with the log-log slope.
pub fn nikolskii_ratio(basis: Arc<SpectralBasis>, levels: &[f64], p: f64, r: f64, trials: usize, seed: u64) -> Result<NikolskiiReport> {
    if !(p > 0.0 && p < r) {
        return Err(invalid("p", format!("need 0 < p < r, got p = {p}, r = {r}")));
    }
    let m = Manifold::new(basis.kind);
    let x0 = m.grid(1.0)[0];
    let mut rows = Vec::new();
    for (li, &level) in levels.iter().enumerate() {
        let k = DiffusionPolynomial::localized_kernel(basis.clone(), level, &x0)?;
        let kernel_ratio = quasi_norm(&k, r)? / quasi_norm(&k, p)?;
        let mut worst = kernel_ratio;
        for t in 0..trials {
            let q = random_polynomial(basis.clone(), level, seed.wrapping_add((li * trials + t) as u64))?;
            worst = worst.max(quasi_norm(&q, r)? / quasi_norm(&q, p)?);
        }
        rows.push(NikolskiiRow {
            level,
            worst_ratio: worst,
            kernel_ratio,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.level.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.worst_ratio.ln()).collect();
    let inv_r = if r.is_infinite() { 0.0 } else { 1.0 / r };
    Ok(NikolskiiReport {
        p,
        r,
        rows,
        fitted_slope: ls_slope(&xs, &ys),
        claimed_slope: m.alpha() * (1.0 / p - inv_r),
        raw_integrals: p < 1.0,
    })
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return f64::NAN;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernsteinReport {
    #[serde(rename = "L")]
    pub level: f64,
    /// `max ||P'||_inf / (L ||P||_inf)` over the random trials and `cos(L t)`.
    pub max_ratio: f64,
    /// The ratio for the extremal `cos(L t)`.
    pub extremal_ratio: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Circle Bernstein ratio `||P'||_inf / (L ||P||_inf)` over random `P` in
/// `Pi_L` and the extremal `cos(L t)`.
pub fn bernstein_ratio(basis: Arc<SpectralBasis>, level: f64, trials: usize, seed: u64) -> Result<BernsteinReport> {
    if basis.kind != ManifoldKind::Circle {
        return Err(invalid("manifold", "the Bernstein check runs on the circle"));
    }
    if !(level >= 1.0) || level.fract() != 0.0 {
        return Err(MzError::InvalidLevel(level));
    }
    let ratio = |p: &DiffusionPolynomial| -> Result<f64> { Ok(sup_norm(&p.derivative()?) / (level * sup_norm(p))) };
    // basis index 2L - 1 is sqrt2 cos(L t)
    let extremal = DiffusionPolynomial::basis_function(basis.clone(), level, 2 * level as usize - 1)?;
    let extremal_ratio = ratio(&extremal)?;
    let mut max_ratio = extremal_ratio;
    for t in 0..trials {
        let p = random_polynomial(basis.clone(), level, seed.wrapping_add(t as u64))?;
        max_ratio = max_ratio.max(ratio(&p)?);
    }
    Ok(BernsteinReport {
        level,
        max_ratio,
        extremal_ratio,
        trials,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    /// `||QR - S(QR)||_{mu;2} / ||QR||_{mu;2}`, with `S` the orthogonal
    /// projection onto `Pi_{A* L}`.
    pub l2: f64,
    /// The same residual measured in the grid sup norm (reported only).
    pub grid_inf: f64,
}

/// Relative energy of `QR` outside `Pi_{A* L}`, using `rule` for all integrals.
pub fn product_leakage_with_rule(q: &DiffusionPolynomial, r: &DiffusionPolynomial, astar: f64, rule: &ReferenceQuadrature) -> Result<LeakageReport> {
    if q.kind() != r.kind() || rule.kind != q.kind() {
        return Err(MzError::ManifoldMismatch {
            expected: q.kind().to_string(),
            found: r.kind().to_string(),
        });
    }
    let level = q.level.max(r.level);
    let m = q.manifold();
    let target = astar * level;
    let prod_deg = level_degree(m.kind, q.level) + level_degree(m.kind, r.level);
    let proj_deg = level_degree(m.kind, target);
    let need = 2 * prod_deg.max(proj_deg);
    if rule.exact_degree < need {
        return Err(MzError::InsufficientQuadrature {
            available: rule.exact_degree,
            required: need,
        });
    }
    let big = eigen_system(&m, target)?;
    let n = big.len();
    let qv = q.eval_many(&rule.nodes);
    let rv = r.eval_many(&rule.nodes);
    let prod: Vec<f64> = qv.iter().zip(&rv).map(|(a, b)| a * b).collect();
    let mut coef = vec![0.0; n];
    let mut buf = Vec::new();
    for ((x, w), f) in rule.nodes.iter().zip(&rule.weights).zip(&prod) {
        big.eval_into(x, n, &mut buf);
        for (c, v) in coef.iter_mut().zip(&buf) {
            *c += w * f * v;
        }
    }
    let mut res2 = 0.0;
    let mut norm2 = 0.0;
    for ((x, w), f) in rule.nodes.iter().zip(&rule.weights).zip(&prod) {
        big.eval_into(x, n, &mut buf);
        let s: f64 = buf.iter().zip(&coef).map(|(a, b)| a * b).sum();
        res2 += w * (f - s) * (f - s);
        norm2 += w * f * f;
    }
    if norm2 == 0.0 {
        return Ok(LeakageReport { l2: 0.0, grid_inf: 0.0 });
    }
    let mut rinf: f64 = 0.0;
    let mut finf: f64 = 0.0;
    for (x, f) in rule.nodes.iter().zip(&prod) {
        big.eval_into(x, n, &mut buf);
        let s: f64 = buf.iter().zip(&coef).map(|(a, b)| a * b).sum();
        rinf = rinf.max((f - s).abs());
        finf = finf.max(f.abs());
    }
    Ok(LeakageReport {
        l2: (res2.max(0.0) / norm2).sqrt(),
        grid_inf: rinf / finf,
    })
}

/// [`product_leakage_with_rule`] with a reference rule of sufficient degree.
pub fn product_leakage(q: &DiffusionPolynomial, r: &DiffusionPolynomial, astar: f64) -> Result<LeakageReport> {
    if !(astar >= 1.0) {
        return Err(invalid("astar", "must be at least 1"));
    }
    let m = q.manifold();
    let level = q.level.max(r.level);
    let prod_deg = level_degree(m.kind, q.level) + level_degree(m.kind, r.level);
    let proj_deg = level_degree(m.kind, astar * level);
    let rule = ReferenceQuadrature::exact_to(&m, 2 * prod_deg.max(proj_deg) + 2);
    product_leakage_with_rule(q, r, astar, &rule)
}
