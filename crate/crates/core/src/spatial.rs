//! Bucket-grid index over embedded points.
//!
//! Chord length in the embedding never exceeds geodesic distance on the
//! model manifolds, so a Euclidean box query of half-width `r` is a safe
//! pre-filter for the geodesic ball of radius `r`.

use rustc_hash::FxHashMap;

use crate::manifolds::{distance_embedded, Embedded, ManifoldKind, Point, BALL_SLACK};

#[derive(Clone, Debug)]
pub struct SpatialIndex {
    kind: ManifoldKind,
    dims: usize,
    cell: f64,
    buckets: FxHashMap<[i32; 4], Vec<u32>>,
    points: Vec<Embedded>,
}

fn dims_of(kind: ManifoldKind) -> usize {
    match kind {
        ManifoldKind::Circle => 2,
        ManifoldKind::Sphere2 => 3,
        ManifoldKind::Torus2 => 4,
    }
}

impl SpatialIndex {
    /// Empty index with bucket width `cell`, which should be comparable to
    /// the typical query radius.
    pub fn new(kind: ManifoldKind, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "bucket width must be positive");
        SpatialIndex {
            kind,
            dims: dims_of(kind),
            cell: cell.max(1e-6),
            buckets: FxHashMap::default(),
            points: Vec::new(),
        }
    }

    pub fn from_points(kind: ManifoldKind, points: &[Point], cell: f64) -> Self {
        let mut idx = Self::new(kind, cell);
        for p in points {
            idx.insert(p.embed());
        }
        idx
    }

    fn key(&self, e: &Embedded) -> [i32; 4] {
        let mut k = [0i32; 4];
        for (i, slot) in k.iter_mut().enumerate().take(self.dims) {
            *slot = (e[i] / self.cell).floor() as i32;
        }
        k
    }

    /// Adds a point and returns its index.
    pub fn insert(&mut self, e: Embedded) -> usize {
        let id = self.points.len();
        let k = self.key(&e);
        self.buckets.entry(k).or_default().push(id as u32);
        self.points.push(e);
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn embedded(&self, i: usize) -> &Embedded {
        &self.points[i]
    }

    /// Calls `f(index, distance)` for every stored point with
    /// `rho <= r + BALL_SLACK`, in no particular order.
    pub fn for_each_within(&self, e: &Embedded, r: f64, mut f: impl FnMut(usize, f64)) {
        let reach = r + BALL_SLACK;
        let span = (reach / self.cell).ceil() as i64 + 1;
        let cells = (2 * span + 1).pow(self.dims as u32);
        if cells as usize > self.buckets.len() * 2 {
            for (i, p) in self.points.iter().enumerate() {
                let d = distance_embedded(self.kind, e, p);
                if d <= reach {
                    f(i, d);
                }
            }
            return;
        }
        // chord <= geodesic, so a chord beyond `reach` rules the point out
        let reach2 = reach * reach * (1.0 + 1e-12);
        let lo: Vec<i32> = (0..self.dims).map(|i| ((e[i] - reach) / self.cell).floor() as i32).collect();
        let hi: Vec<i32> = (0..self.dims).map(|i| ((e[i] + reach) / self.cell).floor() as i32).collect();
        let mut key = [0i32; 4];
        key[..self.dims].copy_from_slice(&lo);
        loop {
            if let Some(ids) = self.buckets.get(&key) {
                for &i in ids {
                    let q = &self.points[i as usize];
                    let chord2: f64 = (0..self.dims).map(|k| (e[k] - q[k]) * (e[k] - q[k])).sum();
                    if chord2 > reach2 {
                        continue;
                    }
                    let d = distance_embedded(self.kind, e, q);
                    if d <= reach {
                        f(i as usize, d);
                    }
                }
            }
            let mut axis = 0;
            loop {
                if axis == self.dims {
                    return;
                }
                if key[axis] < hi[axis] {
                    key[axis] += 1;
                    break;
                }
                key[axis] = lo[axis];
                axis += 1;
            }
        }
    }

    /// Indices within the closed ball, ascending.
    pub fn within(&self, e: &Embedded, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(e, r, |i, _| out.push(i));
        out.sort_unstable();
        out
    }

    /// Smallest index within the closed ball, if any.
    pub fn first_within(&self, e: &Embedded, r: f64) -> Option<usize> {
        let mut best: Option<usize> = None;
        self.for_each_within(e, r, |i, _| {
            if best.is_none_or(|b| i < b) {
                best = Some(i);
            }
        });
        best
    }

    /// Whether some point lies strictly closer than `r`.
    pub fn any_closer_than(&self, e: &Embedded, r: f64) -> bool {
        let mut hit = false;
        self.for_each_within(e, r, |_, d| hit |= d < r);
        hit
    }

    /// Nearest stored point (lowest index among ties).
    pub fn nearest(&self, e: &Embedded) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut r = self.cell;
        loop {
            let mut best: Option<(usize, f64)> = None;
            self.for_each_within(e, r, |i, d| {
                if best.is_none_or(|(bi, bd)| d < bd || (d == bd && i < bi)) {
                    best = Some((i, d));
                }
            });
            if let Some(b) = best {
                return Some(b);
            }
            r *= 2.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::Manifold;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn queries_match_brute_force() {
        for m in [Manifold::circle(), Manifold::sphere(), Manifold::torus()] {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let pts: Vec<Point> = (0..500).map(|_| m.random_point(&mut rng)).collect();
            let idx = SpatialIndex::from_points(m.kind, &pts, 0.2);
            for _ in 0..50 {
                let x = m.random_point(&mut rng);
                for r in [0.05, 0.3, 1.0, 5.0] {
                    let brute: Vec<usize> = (0..pts.len()).filter(|&i| m.distance(&x, &pts[i]) <= r + BALL_SLACK).collect();
                    assert_eq!(idx.within(&x.embed(), r), brute);
                }
                let (ni, nd) = idx.nearest(&x.embed()).unwrap();
                let bd = pts.iter().map(|p| m.distance(&x, p)).fold(f64::INFINITY, f64::min);
                assert_eq!(nd, bd);
                assert_eq!(m.distance(&x, &pts[ni]), bd);
            }
        }
    }
}
