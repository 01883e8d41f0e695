//! Signed measures: atomic, density and ball-average representations,
//! with total variation, closed-ball masses and regularity certificates.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, MzError, Result};
use crate::manifolds::{gauss_legendre, Manifold, ManifoldKind, Point, ReferenceQuadrature, BALL_SLACK};
use crate::spatial::SpatialIndex;

/// Density values below this are treated as outside the support.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

/// Built-in weight functions for density measures. All of them depend on
/// the first intrinsic coordinate only (angle, colatitude, first angle).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum WeightFunction {
    Const {
        value: f64,
    },
    /// `sin` of the first coordinate (signed).
    Sin,
    /// `|sin|` of the first coordinate.
    SinAbs,
    /// `low` on the first half of the first coordinate's range, `high` on the rest.
    Jump {
        low: f64,
        high: f64,
    },
    /// Piecewise constant: `values[i]` on `[breaks[i-1], breaks[i])`.
    Table {
        breaks: Vec<f64>,
        values: Vec<f64>,
    },
}

impl WeightFunction {
    pub fn eval(&self, kind: ManifoldKind, p: &Point) -> f64 {
        let t = p.coords()[0];
        match self {
            WeightFunction::Const { value } => *value,
            WeightFunction::Sin => t.sin(),
            WeightFunction::SinAbs => t.sin().abs(),
            WeightFunction::Jump { low, high } => {
                let mid = if kind == ManifoldKind::Sphere2 { PI / 2.0 } else { PI };
                if t < mid {
                    *low
                } else {
                    *high
                }
            }
            WeightFunction::Table { breaks, values } => values[breaks.partition_point(|&b| b <= t)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WeightFunction::Table { breaks, values } => {
                if values.len() != breaks.len() + 1 {
                    return Err(invalid("table", "need exactly one more value than breakpoints"));
                }
                if breaks.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(invalid("table", "breakpoints must be strictly increasing"));
                }
                Ok(())
            }
            WeightFunction::Const { value } if !value.is_finite() => Err(invalid("value", "must be finite")),
            _ => Ok(()),
        }
    }

    /// Extreme values of `|w|` (used for qualitative regularity bands).
    pub fn abs_range(&self) -> (f64, f64) {
        match self {
            WeightFunction::Const { value } => (value.abs(), value.abs()),
            WeightFunction::Sin | WeightFunction::SinAbs => (0.0, 1.0),
            WeightFunction::Jump { low, high } => (low.abs().min(high.abs()), low.abs().max(high.abs())),
            WeightFunction::Table { values, .. } => values.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(v.abs()), b.max(v.abs()))),
        }
    }
}

/// A finite signed Borel measure on a model manifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SignedMeasure {
    /// `sum_y w_y delta_y`.
    Atomic { kind: ManifoldKind, atoms: Vec<(Point, f64)> },
    /// `w dmu` for a built-in weight function.
    Density { kind: ManifoldKind, weight: WeightFunction },
    /// `sum_k w_k mu|_{B(c_k, r_k)} / mu(B(c_k, r_k))`.
    BallAverage {
        kind: ManifoldKind,
        centers: Vec<Point>,
        radii: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl SignedMeasure {
    pub fn atomic(kind: ManifoldKind, atoms: Vec<(Point, f64)>) -> Self {
        SignedMeasure::Atomic { kind, atoms }
    }

    /// Atoms with equal weights `total / n`.
    pub fn equal_atoms(kind: ManifoldKind, points: &[Point], total: f64) -> Self {
        let w = total / points.len().max(1) as f64;
        SignedMeasure::Atomic {
            kind,
            atoms: points.iter().map(|p| (*p, w)).collect(),
        }
    }

    /// The normalized volume measure `mu`.
    pub fn uniform(kind: ManifoldKind) -> Self {
        SignedMeasure::Density {
            kind,
            weight: WeightFunction::Const { value: 1.0 },
        }
    }

    pub fn zero(kind: ManifoldKind) -> Self {
        SignedMeasure::Atomic { kind, atoms: Vec::new() }
    }

    pub fn ball_average(kind: ManifoldKind, centers: Vec<Point>, radii: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if centers.len() != radii.len() || centers.len() != weights.len() {
            return Err(MzError::DimensionMismatch("ball-average centers, radii and weights differ in length".into()));
        }
        if radii.iter().any(|&r| !(r > 0.0)) {
            return Err(invalid("radii", "ball radii must be positive"));
        }
        Ok(SignedMeasure::BallAverage {
            kind,
            centers,
            radii,
            weights,
        })
    }

    pub fn kind(&self) -> ManifoldKind {
        match self {
            SignedMeasure::Atomic { kind, .. } | SignedMeasure::Density { kind, .. } | SignedMeasure::BallAverage { kind, .. } => *kind,
        }
    }

    pub fn manifold(&self) -> Manifold {
        Manifold::new(self.kind())
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, SignedMeasure::Atomic { .. })
    }

    pub fn is_zero(&self) -> bool {
        match self {
            SignedMeasure::Atomic { atoms, .. } => atoms.iter().all(|a| a.1 == 0.0),
            SignedMeasure::Density { weight, .. } => match weight {
                WeightFunction::Const { value } => *value == 0.0,
                WeightFunction::Jump { low, high } => *low == 0.0 && *high == 0.0,
                WeightFunction::Table { values, .. } => values.iter().all(|v| *v == 0.0),
                _ => false,
            },
            SignedMeasure::BallAverage { weights, .. } => weights.iter().all(|w| *w == 0.0),
        }
    }

    /// Radon-Nikodym derivative with respect to `mu` (absolutely continuous variants).
    pub fn density_at(&self, y: &Point) -> Option<f64> {
        match self {
            SignedMeasure::Atomic { .. } => None,
            SignedMeasure::Density { kind, weight } => Some(weight.eval(*kind, y)),
            SignedMeasure::BallAverage {
                kind,
                centers,
                radii,
                weights,
            } => {
                let m = Manifold::new(*kind);
                Some(
                    centers
                        .iter()
                        .zip(radii)
                        .zip(weights)
                        .filter(|((c, r), _)| m.distance(c, y) <= **r + BALL_SLACK)
                        .map(|((c, r), w)| w / m.ball_measure(c, *r))
                        .sum(),
                )
            }
        }
    }

    /// Node masses representing `nu` on polynomial integrands up to `level`:
    /// the atoms themselves, or the dense reference rule weighted by the
    /// density.
    pub fn discretize(&self, level: f64) -> Vec<(Point, f64)> {
        match self {
            SignedMeasure::Atomic { atoms, .. } => atoms.clone(),
            _ => {
                let rule = ReferenceQuadrature::dense(&self.manifold(), level);
                rule.nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, q)| (*p, q * self.density_at(p).unwrap_or(0.0)))
                    .collect()
            }
        }
    }

    /// `|nu|(X)`.
    pub fn total_variation(&self) -> f64 {
        match self {
            SignedMeasure::Atomic { atoms, .. } => atoms.iter().map(|a| a.1.abs()).sum(),
            SignedMeasure::Density {
                weight: WeightFunction::Const { value },
                ..
            } => value.abs(),
            SignedMeasure::BallAverage { weights, .. } if weights.iter().all(|w| *w >= 0.0) || weights.iter().all(|w| *w <= 0.0) => {
                weights.iter().map(|w| w.abs()).sum()
            }
            _ => self.discretize(1.0).iter().map(|a| a.1.abs()).sum(),
        }
    }

    /// Closed-ball mass `|nu|(B(x, r))`. For repeated queries build a
    /// [`MassProbe`] instead.
    pub fn ball_mass(&self, x: &Point, r: f64) -> f64 {
        MassProbe::new(self, r.max(1e-3)).mass(x, r)
    }

    /// Support points: nonzero atoms, or probe points where the density
    /// exceeds [`SUPPORT_THRESHOLD`] in absolute value.
    pub fn support_points(&self, probe: &[Point]) -> Vec<Point> {
        match self {
            SignedMeasure::Atomic { atoms, .. } => atoms.iter().filter(|a| a.1 != 0.0).map(|a| a.0).collect(),
            _ => probe
                .iter()
                .filter(|p| self.density_at(p).unwrap_or(0.0).abs() > SUPPORT_THRESHOLD)
                .copied()
                .collect(),
        }
    }
}

/// Reusable evaluator of `|nu|(B(x, r))`.
pub struct MassProbe<'a> {
    nu: &'a SignedMeasure,
    manifold: Manifold,
    atoms: Option<(SpatialIndex, Vec<f64>)>,
}

/// Panel count and order of the ball-adapted product rule.
const RADIAL_PANELS: usize = 8;
const PANEL_ORDER: usize = 8;
const ANGULAR_NODES: usize = 96;

impl<'a> MassProbe<'a> {
    /// `typical_radius` sizes the atom index buckets.
    pub fn new(nu: &'a SignedMeasure, typical_radius: f64) -> Self {
        let manifold = nu.manifold();
        let atoms = match nu {
            SignedMeasure::Atomic { kind, atoms } => {
                let pts: Vec<Point> = atoms.iter().map(|a| a.0).collect();
                let idx = SpatialIndex::from_points(*kind, &pts, typical_radius.clamp(1e-4, 1.0));
                Some((idx, atoms.iter().map(|a| a.1.abs()).collect()))
            }
            _ => None,
        };
        MassProbe { nu, manifold, atoms }
    }

    pub fn mass(&self, x: &Point, r: f64) -> f64 {
        if r < 0.0 {
            return 0.0;
        }
        if let Some((idx, w)) = &self.atoms {
            let mut s = 0.0;
            // ascending index order keeps the sum reproducible
            for i in idx.within(&x.embed(), r) {
                s += w[i];
            }
            return s;
        }
        if let SignedMeasure::Density {
            weight: WeightFunction::Const { value },
            ..
        } = self.nu
        {
            return value.abs() * self.manifold.ball_measure(x, r);
        }
        let nu = self.nu;
        ball_integral(&self.manifold, x, r, |y| nu.density_at(y).unwrap_or(0.0).abs())
    }
}

fn composite_gl(a: f64, b: f64) -> Vec<(f64, f64)> {
    let (gx, gw) = gauss_legendre(PANEL_ORDER);
    let h = (b - a) / RADIAL_PANELS as f64;
    let mut out = Vec::with_capacity(RADIAL_PANELS * PANEL_ORDER);
    for p in 0..RADIAL_PANELS {
        let lo = a + p as f64 * h;
        for (x, w) in gx.iter().zip(&gw) {
            out.push((lo + (x + 1.0) * h / 2.0, w * h / 2.0));
        }
    }
    out
}

/// Angular rule for torus balls. Above radius `pi` the radial limit has
/// kinks where the disk meets the fundamental square, so the angle range is
/// split there and each piece gets its own Gauss-Legendre rule.
fn torus_angles(r: f64) -> Vec<(f64, f64)> {
    if r <= PI {
        return (0..ANGULAR_NODES)
            .map(|j| (TAU * (j as f64 + 0.5) / ANGULAR_NODES as f64, TAU / ANGULAR_NODES as f64))
            .collect();
    }
    let a = (PI / r).acos();
    let mut cuts = Vec::new();
    for q in 0..4 {
        let base = q as f64 * PI / 2.0;
        cuts.extend([base, base + a, base + PI / 2.0 - a]);
    }
    cuts.push(TAU);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    let (gx, gw) = gauss_legendre(16);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        for (x, wt) in gx.iter().zip(&gw) {
            out.push((lo + (x + 1.0) * (hi - lo) / 2.0, wt * (hi - lo) / 2.0));
        }
    }
    out
}

/// `int_{B(x, r)} f dmu` by a fixed product rule adapted to the ball
/// (geodesic polar coordinates around `x`).
pub fn ball_integral(m: &Manifold, x: &Point, r: f64, f: impl Fn(&Point) -> f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    if r >= m.diameter() {
        return ReferenceQuadrature::dense(m, 1.0).integrate(f);
    }
    match (m.kind, *x) {
        (ManifoldKind::Circle, Point::Circle(t)) => composite_gl(t - r, t + r)
            .iter()
            .map(|&(s, w)| w * f(&Point::circle(s)))
            .sum::<f64>()
            / TAU,
        (ManifoldKind::Sphere2, _) => {
            let radial = composite_gl(0.0, r);
            let mut s = 0.0;
            for j in 0..ANGULAR_NODES {
                let psi = TAU * j as f64 / ANGULAR_NODES as f64;
                for &(rho, w) in &radial {
                    s += w * rho.sin() * f(&m.offset(x, rho, psi));
                }
            }
            s * (TAU / ANGULAR_NODES as f64) / (4.0 * PI)
        }
        (ManifoldKind::Torus2, _) => {
            let mut s = 0.0;
            for (psi, wpsi) in torus_angles(r) {
                let (c, sn) = (psi.cos().abs(), psi.sin().abs());
                let lim = r.min(if c > 0.0 { PI / c } else { f64::INFINITY }).min(if sn > 0.0 { PI / sn } else { f64::INFINITY });
                for (rho, w) in composite_gl(0.0, lim) {
                    s += wpsi * w * rho * f(&m.offset(x, rho, psi));
                }
            }
            s / (4.0 * PI * PI)
        }
        _ => panic!("point does not belong to the manifold"),
    }
}

/// Probe-grid estimate of `|||nu|||_{R,d}` and `|||nu|||_{D,d}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityCertificate {
    pub d: f64,
    /// `max_x |nu|(B(x, d)) / d^alpha` over the probed centers.
    pub r_norm: Option<f64>,
    /// `(min_x |nu|(B(x, d)) / d^alpha)^{-1}`; infinite when a probed ball is empty.
    pub d_norm: Option<f64>,
    pub dominance_infinite: bool,
    pub n_centers: usize,
    pub center_source: String,
}

/// Default centers for certificates at scale `d`: a grid of spacing `d/8`
/// plus the atoms of an atomic measure.
pub fn default_centers(nu: &SignedMeasure, d: f64) -> (Vec<Point>, String) {
    let m = nu.manifold();
    let h = (d / 8.0).max(1e-4);
    let mut c = m.grid(h);
    let n_grid = c.len();
    if let SignedMeasure::Atomic { atoms, .. } = nu {
        c.extend(atoms.iter().map(|a| a.0));
    }
    let extra = c.len() - n_grid;
    (c, format!("grid h={h:.6e} ({n_grid} points) + {extra} atoms"))
}

fn ball_masses(nu: &SignedMeasure, d: f64, centers: &[Point]) -> Vec<f64> {
    let probe = MassProbe::new(nu, d);
    centers.iter().map(|x| probe.mass(x, d)).collect()
}

fn check_scale(d: f64) -> Result<()> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(invalid("d", format!("scale must be positive, got {d}")));
    }
    Ok(())
}

/// `R_norm = max_x |nu|(B(x, d)) / d^alpha`.
pub fn regularity_norm(nu: &SignedMeasure, d: f64, centers: &[Point]) -> Result<RegularityCertificate> {
    certify(nu, d, centers, true, false)
}

/// `D_norm = (min_x |nu|(B(x, d)) / d^alpha)^{-1}`, flagged infinite when
/// some probed ball has zero mass.
pub fn dominance_norm(nu: &SignedMeasure, d: f64, centers: &[Point]) -> Result<RegularityCertificate> {
    certify(nu, d, centers, false, true)
}

/// Both norms from one pass over the centers.
pub fn regularity_certificate(nu: &SignedMeasure, d: f64, centers: &[Point]) -> Result<RegularityCertificate> {
    certify(nu, d, centers, true, true)
}

fn certify(nu: &SignedMeasure, d: f64, centers: &[Point], want_r: bool, want_d: bool) -> Result<RegularityCertificate> {
    check_scale(d)?;
    let scale = d.powf(nu.manifold().alpha());
    let masses = ball_masses(nu, d, centers);
    let max = masses.iter().copied().fold(0.0, f64::max);
    let min = masses.iter().copied().fold(f64::INFINITY, f64::min);
    let empty = centers.is_empty() || min <= 0.0;
    Ok(RegularityCertificate {
        d,
        r_norm: want_r.then_some(max / scale),
        d_norm: want_d.then(|| if empty { f64::INFINITY } else { scale / min }),
        dominance_infinite: want_d && empty,
        n_centers: centers.len(),
        center_source: format!("{} caller-supplied centers", centers.len()),
    })
}

/// `delta(supp nu)` measured on `probe`: the largest distance from a probe
/// point to the nearest support point.
pub fn support_mesh_norm(nu: &SignedMeasure, probe: &[Point]) -> Result<f64> {
    if nu.is_zero() {
        return Err(MzError::EmptySupport);
    }
    let support = nu.support_points(probe);
    if support.is_empty() {
        return Err(MzError::EmptySupport);
    }
    let m = nu.manifold();
    let idx = SpatialIndex::from_points(m.kind, &support, 0.05);
    Ok(probe
        .iter()
        .map(|p| idx.nearest(&p.embed()).map(|(_, d)| d).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn equispaced(n: usize) -> Vec<Point> {
        (0..n).map(|k| Point::circle(TAU * k as f64 / n as f64)).collect()
    }

    #[test]
    fn total_variation_examples() {
        let k = ManifoldKind::Circle;
        let nu = SignedMeasure::atomic(k, vec![(Point::circle(0.0), 1.0), (Point::circle(1.0), -2.0), (Point::circle(2.0), 3.0)]);
        assert_eq!(nu.total_variation(), 6.0);
        assert_eq!(SignedMeasure::zero(k).total_variation(), 0.0);
        let s = SignedMeasure::Density { kind: k, weight: WeightFunction::Sin };
        // dense trapezoid oracle of |sin t| / (2 pi)
        let n = 200_000;
        let oracle: f64 = (0..n).map(|i| (TAU * (i as f64 + 0.5) / n as f64).sin().abs()).sum::<f64>() / n as f64;
        assert_abs_diff_eq!(oracle, 2.0 / PI, epsilon = 1e-9);
        assert_abs_diff_eq!(s.total_variation(), oracle, epsilon = 1e-6);
    }

    #[test]
    fn ball_mass_examples() {
        let k = ManifoldKind::Circle;
        let x = Point::circle(0.4);
        assert_eq!(SignedMeasure::atomic(k, vec![(x, 2.0)]).ball_mass(&x, 0.0), 2.0);
        assert_abs_diff_eq!(SignedMeasure::uniform(k).ball_mass(&x, PI / 4.0), 0.25, epsilon = 1e-15);
        let nu = SignedMeasure::equal_atoms(k, &equispaced(8), 1.0);
        let brute = equispaced(8).iter().filter(|p| Manifold::circle().distance(&Point::circle(0.0), p) <= TAU / 8.0 + 1e-12).count();
        assert_eq!(brute, 3);
        assert_abs_diff_eq!(nu.ball_mass(&Point::circle(0.0), TAU / 8.0), 3.0 / 8.0, epsilon = 1e-15);
    }

    #[test]
    fn ball_integral_matches_analytic_measure() {
        for m in [Manifold::circle(), Manifold::sphere(), Manifold::torus()] {
            let x = m.grid(0.7)[3];
            for r in [0.01, 0.3, 1.5, 3.0, 4.0] {
                assert_abs_diff_eq!(ball_integral(&m, &x, r, |_| 1.0), m.ball_measure(&x, r), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn density_ball_mass_of_sin_abs() {
        let nu = SignedMeasure::Density {
            kind: ManifoldKind::Circle,
            weight: WeightFunction::SinAbs,
        };
        // int_{pi/2 - 0.5}^{pi/2 + 0.5} sin / (2 pi) = 2 sin(0.5) / (2 pi)
        let v = nu.ball_mass(&Point::circle(PI / 2.0), 0.5);
        assert_abs_diff_eq!(v, (0.5f64).sin() / PI, epsilon = 1e-12);
    }

    #[test]
    fn support_mesh_examples() {
        let m = Manifold::circle();
        let probe = m.grid(1e-3);
        let tol = 1e-3;
        let four = SignedMeasure::equal_atoms(m.kind, &equispaced(4), 1.0);
        assert_abs_diff_eq!(support_mesh_norm(&four, &probe).unwrap(), PI / 4.0, epsilon = tol);
        assert_abs_diff_eq!(support_mesh_norm(&SignedMeasure::uniform(m.kind), &probe).unwrap(), 0.0, epsilon = tol);
        let two = SignedMeasure::equal_atoms(m.kind, &[Point::circle(0.0), Point::circle(PI / 2.0)], 1.0);
        // brute-force max-min distance over the probe
        let oracle = probe
            .iter()
            .map(|p| m.distance(p, &Point::circle(0.0)).min(m.distance(p, &Point::circle(PI / 2.0))))
            .fold(0.0, f64::max);
        assert_abs_diff_eq!(oracle, 3.0 * PI / 4.0, epsilon = tol);
        assert_abs_diff_eq!(support_mesh_norm(&two, &probe).unwrap(), oracle, epsilon = 1e-12);
        assert_eq!(support_mesh_norm(&SignedMeasure::zero(m.kind), &probe), Err(MzError::EmptySupport));
    }

    #[test]
    fn regularity_examples() {
        let k = ManifoldKind::Circle;
        let mu = SignedMeasure::uniform(k);
        for d in [0.1, 1.0, PI] {
            let (c, _) = default_centers(&mu, d);
            let cert = regularity_certificate(&mu, d, &c).unwrap();
            assert_abs_diff_eq!(cert.r_norm.unwrap(), 1.0 / PI, epsilon = 1e-14);
            assert_abs_diff_eq!(cert.d_norm.unwrap(), PI, epsilon = 1e-12);
        }
        let n = 40;
        let nu = SignedMeasure::equal_atoms(k, &equispaced(n), 1.0);
        let d = TAU / n as f64;
        let (c, _) = default_centers(&nu, d);
        let cert = regularity_certificate(&nu, d, &c).unwrap();
        assert_abs_diff_eq!(cert.r_norm.unwrap(), 3.0 / TAU, epsilon = 1e-9);
        assert_abs_diff_eq!(cert.d_norm.unwrap(), PI, epsilon = 1e-9);
        let z = regularity_norm(&SignedMeasure::zero(k), 0.5, &c).unwrap();
        assert_eq!(z.r_norm, Some(0.0));
        let half: Vec<Point> = (0..50).map(|i| Point::circle(PI * i as f64 / 49.0)).collect();
        let hv = SignedMeasure::equal_atoms(k, &half, 1.0);
        let cert = dominance_norm(&hv, 0.1, &Manifold::circle().grid(0.01)).unwrap();
        assert!(cert.dominance_infinite && cert.d_norm == Some(f64::INFINITY));
        assert!(regularity_norm(&mu, 0.0, &c).is_err());
    }
}
