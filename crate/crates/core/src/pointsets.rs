//! Finite point sets: greedy maximal separated subsets, mesh norm,
//! minimal separation and ball-overlap counts.

use std::sync::{Arc, OnceLock};

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, MzError, Result};
use crate::manifolds::{Manifold, ManifoldKind, Point};
use crate::spatial::SpatialIndex;

/// Sets up to this size get a cached pairwise-distance table.
pub const PAIRWISE_CACHE_LIMIT: usize = 2048;

/// An ordered finite subset of a model manifold.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointSet {
    pub kind: ManifoldKind,
    pub points: Vec<Point>,
    #[serde(skip)]
    pairwise: OnceLock<Arc<Vec<f64>>>,
}

impl PartialEq for PointSet {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.points == other.points
    }
}

impl PointSet {
    pub fn new(kind: ManifoldKind, points: Vec<Point>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.kind() != kind) {
            return Err(MzError::ManifoldMismatch {
                expected: kind.to_string(),
                found: p.kind().to_string(),
            });
        }
        Ok(PointSet {
            kind,
            points,
            pairwise: OnceLock::new(),
        })
    }

    pub(crate) fn from_points_unchecked(kind: ManifoldKind, points: Vec<Point>) -> Self {
        PointSet {
            kind,
            points,
            pairwise: OnceLock::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn manifold(&self) -> Manifold {
        Manifold::new(self.kind)
    }

    /// Row-major distance table, available for sets of at most
    /// [`PAIRWISE_CACHE_LIMIT`] points.
    pub fn pairwise(&self) -> Option<Arc<Vec<f64>>> {
        if self.len() > PAIRWISE_CACHE_LIMIT {
            return None;
        }
        Some(
            self.pairwise
                .get_or_init(|| {
                    let m = self.manifold();
                    let n = self.len();
                    let mut t = vec![0.0; n * n];
                    for i in 0..n {
                        for j in (i + 1)..n {
                            let d = m.distance(&self.points[i], &self.points[j]);
                            t[i * n + j] = d;
                            t[j * n + i] = d;
                        }
                    }
                    Arc::new(t)
                })
                .clone(),
        )
    }

    pub fn index(&self, cell: f64) -> SpatialIndex {
        SpatialIndex::from_points(self.kind, &self.points, cell)
    }
}

/// Spacing of `c.len()` evenly spread points, `(vol / n)^(1/alpha)` with
/// `vol` the Riemannian volume.
fn typical_spacing(c: &PointSet) -> f64 {
    let n = c.len().max(1) as f64;
    match c.kind {
        ManifoldKind::Circle => TAU / n,
        ManifoldKind::Sphere2 => (4.0 * PI / n).sqrt(),
        ManifoldKind::Torus2 => TAU / n.sqrt(),
    }
}

/// `n` equispaced circle points, each moved by a uniform fraction in
/// `[-jitter, jitter)` of the gap.
pub fn jittered_circle(n: usize, jitter: f64, seed: u64) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gap = TAU / n as f64;
    let pts = (0..n)
        .map(|k| {
            let j = if jitter > 0.0 { rng.random_range(-jitter..jitter) } else { 0.0 };
            Point::circle(gap * (k as f64 + j))
        })
        .collect();
    PointSet::from_points_unchecked(ManifoldKind::Circle, pts)
}

/// Fibonacci lattice on the sphere: `n` nearly uniform points.
pub fn fibonacci_sphere(n: usize) -> PointSet {
    let golden = PI * (3.0 - 5f64.sqrt());
    let pts = (0..n)
        .map(|k| {
            let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
            Point::sphere(z.acos(), golden * k as f64)
        })
        .collect();
    PointSet::from_points_unchecked(ManifoldKind::Sphere2, pts)
}

/// Greedy maximal `eps`-separated subset, scanning `samples` in order: a
/// sample is kept unless some kept point lies strictly closer than `eps`.
pub fn max_separated_subset(samples: &PointSet, eps: f64) -> Result<PointSet> {
    if samples.is_empty() {
        return Err(MzError::EmptyPointSet);
    }
    if !(eps > 0.0) {
        return Err(invalid("eps", format!("must be positive, got {eps}")));
    }
    let mut idx = SpatialIndex::new(samples.kind, eps.min(1.0));
    let mut kept = Vec::new();
    for p in &samples.points {
        let e = p.embed();
        if !idx.any_closer_than(&e, eps) {
            idx.insert(e);
            kept.push(*p);
        }
    }
    Ok(PointSet::from_points_unchecked(samples.kind, kept))
}

/// `delta(C, K) = max_{k in K} rho(k, C)`.
pub fn mesh_norm(c: &PointSet, probe: &[Point]) -> Result<f64> {
    if c.is_empty() {
        return Err(MzError::EmptyPointSet);
    }
    let idx = c.index(typical_spacing(c).clamp(1e-3, 0.05));
    Ok(probe
        .iter()
        .map(|p| idx.nearest(&p.embed()).map(|(_, d)| d).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max))
}

/// `q(C)`: the smallest pairwise distance (0 when duplicates are present).
pub fn min_separation(c: &PointSet) -> Result<f64> {
    if c.len() < 2 {
        return Err(MzError::TooFewPoints(c.len()));
    }
    if let Some(t) = c.pairwise() {
        let n = c.len();
        let mut q = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                q = q.min(t[i * n + j]);
            }
        }
        return Ok(q);
    }
    let mut idx = SpatialIndex::new(c.kind, 0.05);
    for p in &c.points {
        idx.insert(p.embed());
    }
    let mut q = f64::INFINITY;
    for (i, p) in c.points.iter().enumerate() {
        let e = p.embed();
        let mut r = 0.05;
        loop {
            let mut best = f64::INFINITY;
            idx.for_each_within(&e, r, |j, d| {
                if j != i {
                    best = best.min(d);
                }
            });
            if best.is_finite() || r > 10.0 {
                q = q.min(best);
                break;
            }
            r *= 2.0;
        }
    }
    Ok(q)
}

/// `q(C)` together with a check of `q(C)/2 <= delta(C)` on `probe` (up to
/// `tol`, the probe resolution).
pub fn min_separation_checked(c: &PointSet, probe: &[Point], tol: f64) -> Result<(f64, f64)> {
    let q = min_separation(c)?;
    let delta = mesh_norm(c, probe)?;
    if q / 2.0 > delta + tol {
        return Err(MzError::InvariantViolated(format!("q(C)/2 = {} exceeds delta(C) = {delta}", q / 2.0)));
    }
    Ok((q, delta))
}

/// `max_{s in samples} #{c in C : rho(s, c) <= radius}`.
pub fn overlap_count(c: &PointSet, radius: f64, samples: &[Point]) -> usize {
    let idx = c.index(radius.clamp(1e-4, 1.0));
    samples
        .iter()
        .map(|s| {
            let mut n = 0;
            idx.for_each_within(&s.embed(), radius, |_, _| n += 1);
            n
        })
        .max()
        .unwrap_or(0)
}
