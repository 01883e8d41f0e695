use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use super::harmonics::{legendre_p, real_harmonics};
use super::{Manifold, ManifoldKind, Point};
use crate::error::{MzError, Result};

/// Tolerance used when comparing frequencies against a level.
pub(crate) const LEVEL_EPS: f64 = 1e-12;

/// Identifies which eigenfunction an entry refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisLabel {
    Constant,
    /// `sqrt(2) cos(k theta)`.
    Cos(u32),
    /// `sqrt(2) sin(k theta)`.
    Sin(u32),
    /// Real spherical harmonic of degree `l`; `m > 0` is the cosine and
    /// `m < 0` the sine member of order `|m|`.
    Harmonic { l: u32, m: i32 },
    /// Product of circle functions (by circle-basis index) in each angle.
    Tensor { first: u32, second: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisEntry {
    /// Frequency `ell_k`, clamped below by 1.
    pub ell: f64,
    pub label: BasisLabel,
    /// Polynomial degree (per coordinate for the torus).
    pub degree: usize,
}

/// Ordered eigenpairs `(ell_k, phi_k)` with `ell_k <= level`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralBasis {
    pub kind: ManifoldKind,
    pub level: f64,
    pub entries: Vec<BasisEntry>,
}

fn circle_index_freq(idx: u32) -> u32 {
    idx.div_ceil(2)
}

fn circle_label(idx: u32) -> BasisLabel {
    if idx == 0 {
        BasisLabel::Constant
    } else if idx % 2 == 1 {
        BasisLabel::Cos(idx.div_ceil(2))
    } else {
        BasisLabel::Sin(idx / 2)
    }
}

/// Circle basis values `1, sqrt2 cos t, sqrt2 sin t, ...` up to frequency `kmax`.
fn circle_values(kmax: usize, t: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    let (c1, s1) = (t.cos(), t.sin());
    let (mut c, mut s) = (1.0, 0.0);
    for _ in 1..=kmax {
        let nc = c * c1 - s * s1;
        let ns = s * c1 + c * s1;
        c = nc;
        s = ns;
        out.push(SQRT_2 * c);
        out.push(SQRT_2 * s);
    }
}

/// All eigenpairs of the model manifold with `ell_k <= level`.
pub fn eigen_system(m: &Manifold, level: f64) -> Result<SpectralBasis> {
    if !(level >= 1.0) || !level.is_finite() {
        return Err(MzError::InvalidLevel(level));
    }
    let lim = level + LEVEL_EPS;
    let mut entries = Vec::new();
    match m.kind {
        ManifoldKind::Circle => {
            let kmax = lim.floor() as u32;
            for idx in 0..=(2 * kmax) {
                let k = circle_index_freq(idx);
                entries.push(BasisEntry {
                    ell: (k as f64).max(1.0),
                    label: circle_label(idx),
                    degree: k as usize,
                });
            }
        }
        ManifoldKind::Sphere2 => {
            let mut l = 0u32;
            loop {
                let ell = ((l as f64) * (l as f64 + 1.0)).sqrt().max(1.0);
                if ell > lim {
                    break;
                }
                entries.push(BasisEntry {
                    ell,
                    label: BasisLabel::Harmonic { l, m: 0 },
                    degree: l as usize,
                });
                for mm in 1..=(l as i32) {
                    for sign in [1, -1] {
                        entries.push(BasisEntry {
                            ell,
                            label: BasisLabel::Harmonic { l, m: sign * mm },
                            degree: l as usize,
                        });
                    }
                }
                l += 1;
            }
        }
        ManifoldKind::Torus2 => {
            let kmax = lim.floor() as u32;
            for a in 0..=(2 * kmax) {
                for b in 0..=(2 * kmax) {
                    let (ka, kb) = (circle_index_freq(a) as f64, circle_index_freq(b) as f64);
                    let r = (ka * ka + kb * kb).sqrt();
                    if r <= lim {
                        entries.push(BasisEntry {
                            ell: r.max(1.0),
                            label: BasisLabel::Tensor { first: a, second: b },
                            degree: ka.max(kb) as usize,
                        });
                    }
                }
            }
            entries.sort_by(|x, y| x.ell.partial_cmp(&y.ell).unwrap().then_with(|| tensor_key(x).cmp(&tensor_key(y))));
        }
    }
    Ok(SpectralBasis {
        kind: m.kind,
        level,
        entries,
    })
}

fn tensor_key(e: &BasisEntry) -> (u32, u32) {
    match e.label {
        BasisLabel::Tensor { first, second } => (first, second),
        _ => (0, 0),
    }
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `dim Pi_L`: number of entries with `ell_k <= level`.
    pub fn dim(&self, level: f64) -> usize {
        self.entries.partition_point(|e| e.ell <= level + LEVEL_EPS)
    }

    /// Fails unless the basis resolves every frequency up to `level`.
    pub fn require_level(&self, level: f64) -> Result<()> {
        if level > self.level + LEVEL_EPS {
            return Err(MzError::BasisTruncated {
                available: self.level,
                requested: level,
            });
        }
        Ok(())
    }

    /// Largest polynomial degree among the first `n` entries.
    pub fn degree_of_prefix(&self, n: usize) -> usize {
        self.entries[..n].iter().map(|e| e.degree).max().unwrap_or(0)
    }

    /// Polynomial degree of `Pi_level`.
    pub fn degree(&self, level: f64) -> usize {
        self.degree_of_prefix(self.dim(level))
    }

    /// Values of the first `n` basis functions at `x`.
    pub fn eval_into(&self, x: &Point, n: usize, out: &mut Vec<f64>) {
        let deg = self.degree_of_prefix(n);
        match *x {
            Point::Circle(t) => circle_values(deg, t, out),
            Point::Sphere(c, l) => real_harmonics(deg, c, l, out),
            Point::Torus(a, b) => {
                let mut ca = Vec::new();
                let mut cb = Vec::new();
                circle_values(deg, a, &mut ca);
                circle_values(deg, b, &mut cb);
                out.clear();
                for e in &self.entries[..n] {
                    let (i, j) = tensor_key(e);
                    out.push(ca[i as usize] * cb[j as usize]);
                }
            }
        }
        out.truncate(n);
    }

    pub fn eval_all(&self, x: &Point, n: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(n);
        self.eval_into(x, n, &mut v);
        v
    }

    pub fn eval(&self, k: usize, x: &Point) -> f64 {
        self.eval_all(x, k + 1)[k]
    }

    /// Gradients of the first `n` functions in an orthonormal tangent frame
    /// at `x` (second component unused on the circle).
    ///
    /// Analytic on the circle and torus; central differences with step
    /// `1e-5` along the frame of [`Manifold::tangent_steps`] on the sphere.
    pub fn gradients(&self, x: &Point, n: usize) -> Vec<[f64; 2]> {
        let deriv = |vals: &[f64], idx: usize| -> f64 {
            if idx == 0 {
                0.0
            } else {
                let f = circle_index_freq(idx as u32) as f64;
                if idx % 2 == 1 {
                    -f * vals[idx + 1]
                } else {
                    f * vals[idx - 1]
                }
            }
        };
        match *x {
            Point::Circle(t) => {
                let mut v = Vec::new();
                circle_values(self.degree_of_prefix(n), t, &mut v);
                (0..n).map(|k| [deriv(&v, k), 0.0]).collect()
            }
            Point::Torus(a, b) => {
                let deg = self.degree_of_prefix(n);
                let (mut ca, mut cb) = (Vec::new(), Vec::new());
                circle_values(deg, a, &mut ca);
                circle_values(deg, b, &mut cb);
                self.entries[..n]
                    .iter()
                    .map(|e| {
                        let (i, j) = tensor_key(e);
                        let (i, j) = (i as usize, j as usize);
                        [deriv(&ca, i) * cb[j], ca[i] * deriv(&cb, j)]
                    })
                    .collect()
            }
            Point::Sphere(..) => {
                let m = Manifold::new(self.kind);
                let h = 1e-5;
                let mut g = vec![[0.0; 2]; n];
                for (axis, (p, q)) in m.tangent_steps(x, h).into_iter().enumerate() {
                    let vp = self.eval_all(&p, n);
                    let vq = self.eval_all(&q, n);
                    for k in 0..n {
                        g[k][axis] = (vp[k] - vq[k]) / (2.0 * h);
                    }
                }
                g
            }
        }
    }

    /// `|||grad phi_k|||_x` for the first `n` functions.
    pub fn gradient_norms(&self, x: &Point, n: usize) -> Vec<f64> {
        self.gradients(x, n).iter().map(|g| g[0].hypot(g[1])).collect()
    }
}

/// `(x, y) -> sum_j w(ell_j) phi_j(x) phi_j(y)` over `ell_j <= level`,
/// evaluated with the addition theorem of each manifold instead of the
/// explicit basis, so arbitrary truncation levels stay cheap.
#[derive(Clone, Debug)]
pub struct ZonalKernel {
    kind: ManifoldKind,
    /// Per-degree weights (circle, sphere), already multiplied by the
    /// multiplicity factor of the addition theorem.
    degree_weights: Vec<f64>,
    /// `(k1, k2, weight)` for the torus, with multiplicity factors.
    torus_terms: Vec<(usize, usize, f64)>,
    torus_kmax: usize,
}

impl ZonalKernel {
    pub fn new(kind: ManifoldKind, level: f64, w: impl Fn(f64) -> f64) -> Self {
        let lim = level + LEVEL_EPS;
        let mut degree_weights = Vec::new();
        let mut torus_terms = Vec::new();
        let mut torus_kmax = 0;
        match kind {
            ManifoldKind::Circle => {
                let kmax = lim.floor().max(0.0) as usize;
                for k in 0..=kmax {
                    let mult = if k == 0 { 1.0 } else { 2.0 };
                    degree_weights.push(mult * w((k as f64).max(1.0)));
                }
            }
            ManifoldKind::Sphere2 => {
                let mut l = 0usize;
                loop {
                    let ell = ((l * (l + 1)) as f64).sqrt().max(1.0);
                    if ell > lim {
                        break;
                    }
                    degree_weights.push((2 * l + 1) as f64 * w(ell));
                    l += 1;
                }
            }
            ManifoldKind::Torus2 => {
                let kmax = lim.floor().max(0.0) as usize;
                torus_kmax = kmax;
                for k1 in 0..=kmax {
                    for k2 in 0..=kmax {
                        let r = ((k1 * k1 + k2 * k2) as f64).sqrt();
                        if r <= lim {
                            let mult = if k1 == 0 { 1.0 } else { 2.0 } * if k2 == 0 { 1.0 } else { 2.0 };
                            torus_terms.push((k1, k2, mult * w(r.max(1.0))));
                        }
                    }
                }
            }
        }
        ZonalKernel {
            kind,
            degree_weights,
            torus_terms,
            torus_kmax,
        }
    }

    /// Value as a function of the per-coordinate offsets (circle/torus) or
    /// of the geodesic distance (sphere).
    pub fn eval(&self, x: &Point, y: &Point) -> f64 {
        match (*x, *y) {
            (Point::Circle(a), Point::Circle(b)) => self.eval_circle(a - b),
            (Point::Sphere(..), Point::Sphere(..)) => {
                let m = Manifold::new(ManifoldKind::Sphere2);
                self.eval_sphere(m.distance(x, y))
            }
            (Point::Torus(a1, a2), Point::Torus(b1, b2)) => self.eval_torus(a1 - b1, a2 - b2),
            _ => panic!("zonal kernel evaluated on mismatched manifolds"),
        }
    }

    /// Circle: value at angular offset `delta` (Clenshaw for the cosine sum).
    pub fn eval_circle(&self, delta: f64) -> f64 {
        let c = delta.cos();
        let (mut b1, mut b2) = (0.0, 0.0);
        for &a in self.degree_weights.iter().skip(1).rev() {
            let b0 = a + 2.0 * c * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        // sum_{k>=1} a_k cos(k delta) = b1 cos(delta) - b2 with the recurrence above
        let tail = if self.degree_weights.len() > 1 { b1 * c - b2 } else { 0.0 };
        self.degree_weights.first().copied().unwrap_or(0.0) + tail
    }

    /// Sphere: value at geodesic distance `rho`.
    pub fn eval_sphere(&self, rho: f64) -> f64 {
        if self.degree_weights.is_empty() {
            return 0.0;
        }
        let p = legendre_p(self.degree_weights.len() - 1, rho.cos());
        self.degree_weights.iter().zip(&p).map(|(w, p)| w * p).sum()
    }

    /// Torus: value at per-angle offsets.
    pub fn eval_torus(&self, d1: f64, d2: f64) -> f64 {
        let c1: Vec<f64> = (0..=self.torus_kmax).map(|k| (k as f64 * d1).cos()).collect();
        let c2: Vec<f64> = (0..=self.torus_kmax).map(|k| (k as f64 * d2).cos()).collect();
        self.torus_terms.iter().map(|&(k1, k2, w)| w * c1[k1] * c2[k2]).sum()
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dimensions() {
        assert_eq!(eigen_system(&Manifold::circle(), 2.0).unwrap().len(), 5);
        assert_eq!(eigen_system(&Manifold::circle(), 1.0).unwrap().len(), 3);
        // brute force: degrees l with sqrt(l(l+1)) <= 2 are 0 and 1
        let brute: usize = (0..10u32).filter(|&l| ((l * (l + 1)) as f64).sqrt() <= 2.0).map(|l| 2 * l as usize + 1).sum();
        assert_eq!(brute, 4);
        assert_eq!(eigen_system(&Manifold::sphere(), 2.0).unwrap().len(), brute);
        assert!(eigen_system(&Manifold::circle(), 0.5).is_err());
        let t = eigen_system(&Manifold::torus(), 2.0).unwrap();
        // lattice points |m| <= 2 in Z^2: 13
        assert_eq!(t.len(), 13);
    }

    #[test]
    fn frequencies_nondecreasing_starting_at_one() {
        for m in [Manifold::circle(), Manifold::sphere(), Manifold::torus()] {
            let b = eigen_system(&m, 6.0).unwrap();
            assert_eq!(b.entries[0].ell, 1.0);
            assert!(b.entries.windows(2).all(|w| w[0].ell <= w[1].ell));
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let x = m.random_point(&mut rng);
            assert_eq!(b.eval(0, &x), 1.0);
        }
    }

    #[test]
    fn zonal_matches_explicit_basis() {
        let h = |ell: f64| (-0.1 * ell * ell).exp();
        for m in [Manifold::circle(), Manifold::sphere(), Manifold::torus()] {
            let b = eigen_system(&m, 7.5).unwrap();
            let z = ZonalKernel::new(m.kind, 7.5, h);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..10 {
                let (x, y) = (m.random_point(&mut rng), m.random_point(&mut rng));
                let vx = b.eval_all(&x, b.len());
                let vy = b.eval_all(&y, b.len());
                let direct: f64 = b.entries.iter().zip(vx.iter().zip(&vy)).map(|(e, (a, c))| h(e.ell) * a * c).sum();
                assert_abs_diff_eq!(direct, z.eval(&x, &y), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn analytic_gradients_match_differences() {
        for m in [Manifold::circle(), Manifold::torus()] {
            let b = eigen_system(&m, 4.0).unwrap();
            let x = match m.kind {
                ManifoldKind::Circle => Point::circle(0.77),
                _ => Point::torus(0.3, 2.2),
            };
            let g = b.gradient_norms(&x, b.len());
            let h = 1e-6;
            for k in 0..b.len() {
                let mut sq = 0.0;
                for (p, q) in m.tangent_steps(&x, h) {
                    let d = (b.eval(k, &p) - b.eval(k, &q)) / (2.0 * h);
                    sq += d * d;
                }
                assert_abs_diff_eq!(g[k], sq.sqrt(), epsilon = 1e-6);
            }
        }
    }
}
