use std::f64::consts::{PI, TAU};

use super::basis::eigen_system;
use super::{Manifold, ManifoldKind, Point};
use crate::error::{MzError, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]` (weights sum to 2).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Positive rule integrating every basis function of degree
/// `<= exact_degree` exactly against `mu`.
///
/// Degree means the trigonometric degree on the circle, the per-angle
/// trigonometric degree on the torus and the harmonic degree on the sphere.
#[derive(Clone, Debug)]
pub struct ReferenceQuadrature {
    pub kind: ManifoldKind,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

/// Degree of `Pi_L` for the given manifold.
pub(crate) fn level_degree(kind: ManifoldKind, level: f64) -> usize {
    let lim = level + super::basis::LEVEL_EPS;
    match kind {
        ManifoldKind::Circle | ManifoldKind::Torus2 => lim.floor().max(0.0) as usize,
        ManifoldKind::Sphere2 => {
            let mut l = 0usize;
            while (((l + 1) * (l + 2)) as f64).sqrt() <= lim {
                l += 1;
            }
            l
        }
    }
}

impl ReferenceQuadrature {
    /// Rule for `Pi_L` work: exact to degree `4 deg(Pi_L) + 4`, which covers
    /// products of two elements of `Pi_{2L}`.
    pub fn for_level(m: &Manifold, level: f64) -> Result<Self> {
        if !(level >= 1.0) {
            return Err(MzError::InvalidLevel(level));
        }
        Ok(Self::exact_to(m, 4 * level_degree(m.kind, level) + 4))
    }

    /// Fine rule used for `L^p` integrals of non-polynomial integrands such
    /// as `|P|^p` and density weights: exact to degree `16 deg(Pi_L) + 16`
    /// and never coarser than a fixed per-manifold floor.
    pub fn dense(m: &Manifold, level: f64) -> Self {
        let floor = match m.kind {
            ManifoldKind::Circle => 4095,
            ManifoldKind::Sphere2 => 191,
            ManifoldKind::Torus2 => 127,
        };
        let deg = level_degree(m.kind, level.max(1.0));
        Self::exact_to(m, floor.max(16 * deg + 16))
    }

    /// Smallest rule of the standard family exact to `degree`.
    pub fn exact_to(m: &Manifold, degree: usize) -> Self {
        let (nodes, weights) = match m.kind {
            ManifoldKind::Circle => {
                let n = degree + 1;
                let nodes = (0..n).map(|k| Point::circle(TAU * k as f64 / n as f64)).collect();
                (nodes, vec![1.0 / n as f64; n])
            }
            ManifoldKind::Sphere2 => {
                let nl = (degree + 2) / 2;
                let nphi = degree + 1;
                let (x, w) = gauss_legendre(nl);
                let mut nodes = Vec::with_capacity(nl * nphi);
                let mut weights = Vec::with_capacity(nl * nphi);
                for (xi, wi) in x.iter().zip(&w) {
                    let colat = xi.clamp(-1.0, 1.0).acos();
                    for j in 0..nphi {
                        nodes.push(Point::sphere(colat, TAU * j as f64 / nphi as f64));
                        weights.push(wi / 2.0 / nphi as f64);
                    }
                }
                (nodes, weights)
            }
            ManifoldKind::Torus2 => {
                let n = degree + 1;
                let mut nodes = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        nodes.push(Point::torus(TAU * i as f64 / n as f64, TAU * j as f64 / n as f64));
                    }
                }
                (nodes, vec![1.0 / (n * n) as f64; n * n])
            }
        };
        let rule = ReferenceQuadrature {
            kind: m.kind,
            nodes,
            weights,
            exact_degree: degree,
        };
        rule.self_check(m);
        rule
    }

    /// Construction-time check: unit mass, and the low-degree basis
    /// functions integrate to `delta_{j0}`.
    fn self_check(&self, m: &Manifold) {
        let total: f64 = self.weights.iter().sum();
        assert!((total - 1.0).abs() <= 1e-12, "reference rule mass {total}");
        let probe_level = match m.kind {
            ManifoldKind::Sphere2 => {
                let l = self.exact_degree.min(6) as f64;
                (l * (l + 1.0)).sqrt().max(1.0)
            }
            _ => (self.exact_degree.min(6) as f64).max(1.0),
        };
        let basis = eigen_system(m, probe_level).expect("probe level is at least 1");
        let n = (0..basis.len())
            .take_while(|&k| basis.entries[k].degree <= self.exact_degree)
            .count();
        let mut acc = vec![0.0; n];
        let mut vals = Vec::new();
        for (p, w) in self.nodes.iter().zip(&self.weights) {
            basis.eval_into(p, n, &mut vals);
            for (a, v) in acc.iter_mut().zip(&vals) {
                *a += w * v;
            }
        }
        for (k, a) in acc.iter().enumerate() {
            let target = if k == 0 { 1.0 } else { 0.0 };
            assert!((a - target).abs() <= 1e-12, "reference rule not exact on basis entry {k}: {a}");
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&Point) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }
}
