//! Model manifolds: the circle, the 2-sphere and the flat 2-torus.
//!
//! Every manifold carries its geodesic distance, the normalized volume
//! measure `mu` (a probability measure) and the ball-growth exponent
//! `alpha`. Points are stored in intrinsic coordinates reduced to a
//! canonical range; distances are computed from an embedding in R^2,
//! R^3 or R^4 so that a single code path serves scalar queries and the
//! spatial index.

mod basis;
mod harmonics;
mod quadrature;

pub use basis::{eigen_system, BasisEntry, BasisLabel, SpectralBasis, ZonalKernel};
pub(crate) use basis::LEVEL_EPS;
pub(crate) use quadrature::level_degree;
pub use harmonics::legendre_p;
pub use quadrature::{gauss_legendre, ReferenceQuadrature};

use std::f64::consts::{PI, TAU};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Slack used for closed-ball membership, `rho <= r + BALL_SLACK`.
pub const BALL_SLACK: f64 = 1e-12;

/// Embedding coordinates of a point (unused trailing slots are zero).
pub type Embedded = [f64; 4];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Circle,
    Sphere2,
    Torus2,
}

impl ManifoldKind {
    pub fn name(self) -> &'static str {
        match self {
            ManifoldKind::Circle => "circle",
            ManifoldKind::Sphere2 => "sphere2",
            ManifoldKind::Torus2 => "torus2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "circle" => Some(ManifoldKind::Circle),
            "sphere2" | "sphere" => Some(ManifoldKind::Sphere2),
            "torus2" | "torus" => Some(ManifoldKind::Torus2),
            _ => None,
        }
    }

    /// Number of intrinsic coordinates per point.
    pub fn coord_count(self) -> usize {
        match self {
            ManifoldKind::Circle => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A point in canonical intrinsic coordinates.
///
/// Circle: angle in `[0, 2pi)`. Sphere: colatitude in `[0, pi]` and
/// longitude in `[0, 2pi)`, with longitude 0 at the poles. Torus: two
/// angles in `[0, 2pi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Point {
    Circle(f64),
    Sphere(f64, f64),
    Torus(f64, f64),
}

fn wrap_angle(t: f64) -> f64 {
    let r = t.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl Point {
    pub fn circle(theta: f64) -> Self {
        Point::Circle(wrap_angle(theta))
    }

    pub fn sphere(colat: f64, lon: f64) -> Self {
        let mut c = colat.rem_euclid(TAU);
        let mut l = lon;
        if c > PI {
            c = TAU - c;
            l += PI;
        }
        let l = if c == 0.0 || c == PI { 0.0 } else { wrap_angle(l) };
        Point::Sphere(c, l)
    }

    pub fn torus(a: f64, b: f64) -> Self {
        Point::Torus(wrap_angle(a), wrap_angle(b))
    }

    /// The sphere point with the given (not necessarily normalized) direction.
    pub fn from_direction(v: [f64; 3]) -> Self {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let (x, y, z) = (v[0] / n, v[1] / n, v[2] / n);
        let colat = (x * x + y * y).sqrt().atan2(z);
        let lon = y.atan2(x);
        Point::sphere(colat, lon)
    }

    pub fn from_coords(kind: ManifoldKind, coords: &[f64]) -> Result<Self> {
        if coords.len() != kind.coord_count() || coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid(
                "coords",
                format!("{} expects {} finite coordinates, got {:?}", kind, kind.coord_count(), coords),
            ));
        }
        Ok(match kind {
            ManifoldKind::Circle => Point::circle(coords[0]),
            ManifoldKind::Sphere2 => Point::sphere(coords[0], coords[1]),
            ManifoldKind::Torus2 => Point::torus(coords[0], coords[1]),
        })
    }

    pub fn kind(&self) -> ManifoldKind {
        match self {
            Point::Circle(_) => ManifoldKind::Circle,
            Point::Sphere(..) => ManifoldKind::Sphere2,
            Point::Torus(..) => ManifoldKind::Torus2,
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        match *self {
            Point::Circle(t) => vec![t],
            Point::Sphere(a, b) | Point::Torus(a, b) => vec![a, b],
        }
    }

    pub fn embed(&self) -> Embedded {
        match *self {
            Point::Circle(t) => [t.cos(), t.sin(), 0.0, 0.0],
            Point::Sphere(c, l) => {
                let s = c.sin();
                [s * l.cos(), s * l.sin(), c.cos(), 0.0]
            }
            Point::Torus(a, b) => [a.cos(), a.sin(), b.cos(), b.sin()],
        }
    }

    /// Unit vector of a sphere point.
    pub fn unit_vector(&self) -> [f64; 3] {
        let e = self.embed();
        [e[0], e[1], e[2]]
    }
}

fn angle_between_2(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    let cross = a0 * b1 - a1 * b0;
    let dot = a0 * b0 + a1 * b1;
    cross.abs().atan2(dot)
}

/// Geodesic distance between embedded points of the given manifold.
#[inline]
pub fn distance_embedded(kind: ManifoldKind, a: &Embedded, b: &Embedded) -> f64 {
    match kind {
        ManifoldKind::Circle => angle_between_2(a[0], a[1], b[0], b[1]),
        ManifoldKind::Sphere2 => {
            let cx = a[1] * b[2] - a[2] * b[1];
            let cy = a[2] * b[0] - a[0] * b[2];
            let cz = a[0] * b[1] - a[1] * b[0];
            let cross = (cx * cx + cy * cy + cz * cz).sqrt();
            let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            cross.atan2(dot)
        }
        ManifoldKind::Torus2 => {
            let d1 = angle_between_2(a[0], a[1], b[0], b[1]);
            let d2 = angle_between_2(a[2], a[3], b[2], b[3]);
            (d1 * d1 + d2 * d2).sqrt()
        }
    }
}

/// Structural constants of a manifold: the analytic ball-growth constant
/// `k1` and the heat-kernel constants `k2..k4`, which are fitted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub k1: f64,
    pub k2: Option<f64>,
    pub k3: Option<f64>,
    pub k4: Option<f64>,
}

/// A concrete compact manifold with its normalized volume measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifold {
    pub kind: ManifoldKind,
    pub kappa: Kappa,
}

/// Equal-area style grid with positive masses summing to one.
#[derive(Clone, Debug)]
pub struct MassGrid {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// Spacing parameter the grid was built with; every point of the
    /// manifold lies within this distance of some grid point.
    pub spacing: f64,
}

impl MassGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl Manifold {
    pub fn new(kind: ManifoldKind) -> Self {
        let k1 = match kind {
            ManifoldKind::Circle => 1.0 / PI,
            ManifoldKind::Sphere2 => 0.25,
            ManifoldKind::Torus2 => 1.0 / (4.0 * PI),
        };
        Manifold {
            kind,
            kappa: Kappa {
                k1,
                k2: None,
                k3: None,
                k4: None,
            },
        }
    }

    pub fn circle() -> Self {
        Self::new(ManifoldKind::Circle)
    }

    pub fn sphere() -> Self {
        Self::new(ManifoldKind::Sphere2)
    }

    pub fn torus() -> Self {
        Self::new(ManifoldKind::Torus2)
    }

    /// Record fitted heat-kernel constants.
    pub fn with_fitted_kappa(mut self, k2: f64, k3: f64, k4: f64) -> Self {
        self.kappa.k2 = Some(k2);
        self.kappa.k3 = Some(k3);
        self.kappa.k4 = Some(k4);
        self
    }

    pub fn alpha(&self) -> f64 {
        match self.kind {
            ManifoldKind::Circle => 1.0,
            _ => 2.0,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self.kind {
            ManifoldKind::Circle | ManifoldKind::Sphere2 => PI,
            ManifoldKind::Torus2 => PI * std::f64::consts::SQRT_2,
        }
    }

    pub fn distance(&self, x: &Point, y: &Point) -> f64 {
        distance_embedded(self.kind, &x.embed(), &y.embed())
    }

    /// `mu(B(x, r))` for the closed geodesic ball. All three manifolds are
    /// homogeneous, so the value does not depend on `x`.
    pub fn ball_measure(&self, _x: &Point, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self.kind {
            ManifoldKind::Circle => (r / PI).min(1.0),
            ManifoldKind::Sphere2 => {
                if r >= PI {
                    1.0
                } else {
                    (1.0 - r.cos()) / 2.0
                }
            }
            ManifoldKind::Torus2 => torus_disk_area(r) / (4.0 * PI * PI),
        }
    }

    /// Uniformly distributed random point (with respect to `mu`).
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self.kind {
            ManifoldKind::Circle => Point::circle(rng.random::<f64>() * TAU),
            ManifoldKind::Sphere2 => {
                let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
                Point::sphere(z.clamp(-1.0, 1.0).acos(), rng.random::<f64>() * TAU)
            }
            ManifoldKind::Torus2 => Point::torus(rng.random::<f64>() * TAU, rng.random::<f64>() * TAU),
        }
    }

    /// Grid of spacing at most `h` with exact cell masses.
    ///
    /// Circle and torus: equispaced (tensor) nodes with equal masses.
    /// Sphere: colatitude rings of width `<= h` with ring-band areas split
    /// equally among `ceil(2 pi sin(theta) / h)` longitudes.
    pub fn area_grid(&self, h: f64) -> MassGrid {
        assert!(h > 0.0 && h.is_finite(), "grid spacing must be positive");
        match self.kind {
            ManifoldKind::Circle => {
                let n = (TAU / h).ceil().max(1.0) as usize;
                let points = (0..n).map(|k| Point::circle(TAU * k as f64 / n as f64)).collect();
                MassGrid {
                    points,
                    weights: vec![1.0 / n as f64; n],
                    spacing: h,
                }
            }
            ManifoldKind::Sphere2 => {
                let rings = (PI / h).ceil().max(1.0) as usize;
                let dt = PI / rings as f64;
                let mut points = Vec::new();
                let mut weights = Vec::new();
                for i in 0..rings {
                    let t = (i as f64 + 0.5) * dt;
                    let band = ((i as f64 * dt).cos() - ((i + 1) as f64 * dt).cos()) / 2.0;
                    let n = (TAU * t.sin() / h).ceil().max(1.0) as usize;
                    let shift = if i % 2 == 0 { 0.0 } else { 0.5 };
                    for j in 0..n {
                        points.push(Point::sphere(t, TAU * (j as f64 + shift) / n as f64));
                        weights.push(band / n as f64);
                    }
                }
                MassGrid {
                    points,
                    weights,
                    spacing: h,
                }
            }
            ManifoldKind::Torus2 => {
                let n = (TAU / h).ceil().max(1.0) as usize;
                let mut points = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        points.push(Point::torus(TAU * i as f64 / n as f64, TAU * j as f64 / n as f64));
                    }
                }
                MassGrid {
                    points,
                    weights: vec![1.0 / (n * n) as f64; n * n],
                    spacing: h,
                }
            }
        }
    }

    /// Probe grid of spacing at most `h` (the points of [`Manifold::area_grid`]).
    pub fn grid(&self, h: f64) -> Vec<Point> {
        self.area_grid(h).points
    }

    /// Grid with roughly `n` points.
    pub fn grid_with_count(&self, n: usize) -> MassGrid {
        let n = n.max(1) as f64;
        let h = match self.kind {
            ManifoldKind::Circle => TAU / n,
            ManifoldKind::Sphere2 => (4.0 * PI / n).sqrt(),
            ManifoldKind::Torus2 => TAU / n.sqrt(),
        };
        self.area_grid(h)
    }

    /// Orthonormal tangent directions at `x` (one for the circle).
    pub fn tangent_steps(&self, x: &Point, step: f64) -> Vec<(Point, Point)> {
        match *x {
            Point::Circle(t) => vec![(Point::circle(t + step), Point::circle(t - step))],
            Point::Torus(a, b) => vec![
                (Point::torus(a + step, b), Point::torus(a - step, b)),
                (Point::torus(a, b + step), Point::torus(a, b - step)),
            ],
            Point::Sphere(c, l) => {
                let v = x.unit_vector();
                let e1 = [c.cos() * l.cos(), c.cos() * l.sin(), -c.sin()];
                let e2 = [-l.sin(), l.cos(), 0.0];
                let go = |e: [f64; 3], s: f64| {
                    Point::from_direction([
                        s.cos() * v[0] + s.sin() * e[0],
                        s.cos() * v[1] + s.sin() * e[1],
                        s.cos() * v[2] + s.sin() * e[2],
                    ])
                };
                vec![(go(e1, step), go(e1, -step)), (go(e2, step), go(e2, -step))]
            }
        }
    }

    /// Point at geodesic distance `s` from `x` in direction angle `psi`.
    pub fn offset(&self, x: &Point, s: f64, psi: f64) -> Point {
        match *x {
            Point::Circle(t) => Point::circle(t + s * psi.cos().signum()),
            Point::Torus(a, b) => Point::torus(a + s * psi.cos(), b + s * psi.sin()),
            Point::Sphere(c, l) => {
                let v = x.unit_vector();
                let e1 = [c.cos() * l.cos(), c.cos() * l.sin(), -c.sin()];
                let e2 = [-l.sin(), l.cos(), 0.0];
                let (cp, sp) = (psi.cos(), psi.sin());
                let e = [cp * e1[0] + sp * e2[0], cp * e1[1] + sp * e2[1], cp * e1[2] + sp * e2[2]];
                Point::from_direction([
                    s.cos() * v[0] + s.sin() * e[0],
                    s.cos() * v[1] + s.sin() * e[1],
                    s.cos() * v[2] + s.sin() * e[2],
                ])
            }
        }
    }
}

/// Area of `{(u, v) in [-pi, pi]^2 : u^2 + v^2 <= r^2}`.
fn torus_disk_area(r: f64) -> f64 {
    let a = PI;
    if r <= a {
        PI * r * r
    } else if r >= a * std::f64::consts::SQRT_2 {
        4.0 * a * a
    } else {
        let segment = r * r * (a / r).acos() - a * (r * r - a * a).sqrt();
        PI * r * r - 4.0 * segment
    }
}
