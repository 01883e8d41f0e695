//! Partitions of the manifold adapted to a measure.
//!
//! Cells are never stored as point sets. A partition is a list of stage-1
//! centers with a covering radius plus a chain of index maps; the cell of
//! any point is found by taking the first stage-1 center within the radius
//! and following the maps. Masses `mu(Y_k)` and `|nu|(Y_k)` are sums over a
//! labelled mass grid and over the atoms of `nu`.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, MzError, Result};
use crate::manifolds::{Manifold, ManifoldKind, MassGrid, Point, BALL_SLACK};
use crate::measures::{support_mesh_norm, SignedMeasure};
use crate::pointsets::{max_separated_subset, mesh_norm, min_separation, PointSet};
use crate::spatial::SpatialIndex;

/// Largest scale accepted without `relax_d`.
pub const MAX_SCALE: f64 = 1.0 / 81.0;

/// Containment factor: every cell lies in `B(x_k, 81 d)`.
pub const CONTAINMENT_FACTOR: f64 = 81.0;

/// Stage-1 cells `Z_y`: `p` belongs to the cell of the first center within `delta`.
#[derive(Clone, Debug)]
pub struct BaseCells {
    pub centers: Vec<Point>,
    pub delta: f64,
    /// Assign to the nearest center instead of the first one within `delta`.
    pub nearest: bool,
    index: SpatialIndex,
}

impl BaseCells {
    pub fn new(kind: ManifoldKind, centers: Vec<Point>, delta: f64) -> Self {
        let index = SpatialIndex::from_points(kind, &centers, delta.clamp(1e-4, 1.0));
        BaseCells {
            centers,
            delta,
            nearest: false,
            index,
        }
    }

    pub fn cell_of(&self, p: &Point) -> Option<usize> {
        if self.nearest {
            return self.index.nearest(&p.embed()).filter(|(_, d)| *d <= self.delta).map(|(i, _)| i);
        }
        self.index.first_within(&p.embed(), self.delta)
    }
}

/// Stage-1 partition of `g1` at radius `delta`; fails if some probe point
/// is farther than `delta` from every center.
pub fn base_partition(g1: &PointSet, delta: f64, probe: &[Point]) -> Result<BaseCells> {
    if g1.is_empty() {
        return Err(MzError::EmptyPointSet);
    }
    let cells = BaseCells::new(g1.kind, g1.points.clone(), delta);
    let orphans = probe.iter().filter(|p| cells.cell_of(p).is_none()).count();
    if orphans > 0 {
        return Err(MzError::OrphanPoints { orphans, delta });
    }
    Ok(cells)
}

/// One application of the merge rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeStage {
    /// Which measure played the role of `tau`.
    pub tau: String,
    /// `gamma delta(A)`: every input cell lies in the ball of this radius.
    pub radius: f64,
    /// `delta(A)` measured on the probe grid, and `gamma = radius / delta(A)`.
    pub delta_a: f64,
    pub gamma: f64,
    /// `m = min_z tau(B(z, radius))`.
    pub min_ball_mass: f64,
    /// `c = 1 / max_z #{y in A : rho(y, z) <= 2 radius}`.
    pub threshold_c: f64,
    /// Indices (into the input centers) of the kept centers `G`, ascending.
    pub kept: Vec<usize>,
    /// For each input center, the index into `kept` of the cell it joins.
    pub phi: Vec<usize>,
}

/// Discrete `tau`: atom positions, masses and their current cell labels.
pub struct TauAtoms<'a> {
    pub points: &'a [Point],
    pub masses: &'a [f64],
    pub labels: &'a [usize],
}

/// The merge rule: with `m` and `c` as in [`MergeStage`], keep the centers
/// whose cell has `tau(Z_y) >= c m`; every other center `z` joins the
/// lowest-index `y` maximizing `tau(B(z, radius) ∩ Z_y)`.
///
/// Postconditions `tau(Y_y) >= c m` and `Y_y ⊆ B(y, 3 radius)` (checked on
/// the `tau` atoms) are asserted.
pub fn merge_partition(kind: ManifoldKind, centers: &[Point], tau: &TauAtoms<'_>, radius: f64, delta_a: f64, tau_name: &str) -> Result<MergeStage> {
    let n = centers.len();
    if n == 0 {
        return Err(MzError::EmptyPointSet);
    }
    if tau.points.len() != tau.masses.len() || tau.points.len() != tau.labels.len() {
        return Err(MzError::DimensionMismatch("tau atoms, masses and labels differ in length".into()));
    }
    let m = Manifold::new(kind);
    let cell = radius.clamp(1e-4, 1.0);
    let tau_index = SpatialIndex::from_points(kind, tau.points, cell);
    let center_index = SpatialIndex::from_points(kind, centers, cell);

    let mut cell_mass = vec![0.0; n];
    for (&l, &w) in tau.labels.iter().zip(tau.masses) {
        cell_mass[l] += w;
    }
    let ball_hits: Vec<Vec<usize>> = centers.iter().map(|z| tau_index.within(&z.embed(), radius)).collect();
    let ball_mass: Vec<f64> = ball_hits.iter().map(|h| h.iter().map(|&i| tau.masses[i]).sum()).collect();
    let min_ball_mass = ball_mass.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_ball_mass > 0.0) {
        return Err(MzError::NotDominant { radius });
    }
    let overlap = centers
        .iter()
        .map(|z| {
            let mut k = 0usize;
            center_index.for_each_within(&z.embed(), 2.0 * radius, |_, _| k += 1);
            k
        })
        .max()
        .unwrap_or(1)
        .max(1);
    let threshold_c = 1.0 / overlap as f64;
    let threshold = threshold_c * min_ball_mass;

    let in_g: Vec<bool> = cell_mass.iter().map(|&t| t >= threshold).collect();
    let kept: Vec<usize> = (0..n).filter(|&y| in_g[y]).collect();
    let mut slot = vec![usize::MAX; n];
    for (s, &y) in kept.iter().enumerate() {
        slot[y] = s;
    }
    let mut phi = vec![0usize; n];
    let mut share = vec![0.0; n];
    for z in 0..n {
        if in_g[z] {
            phi[z] = slot[z];
            continue;
        }
        let mut touched = Vec::new();
        for &i in &ball_hits[z] {
            let l = tau.labels[i];
            if share[l] == 0.0 {
                touched.push(l);
            }
            share[l] += tau.masses[i];
        }
        touched.sort_unstable();
        let mut best: Option<(usize, f64)> = None;
        for &y in &touched {
            if best.is_none_or(|(_, b)| share[y] > b) {
                best = Some((y, share[y]));
            }
        }
        for &y in &touched {
            share[y] = 0.0;
        }
        let (y, v) = best.ok_or(MzError::NotDominant { radius })?;
        if !in_g[y] || v < threshold * (1.0 - 1e-12) {
            return Err(MzError::InvariantViolated(format!(
                "merge target of center {z} has share {v:.3e} below threshold {threshold:.3e}"
            )));
        }
        phi[z] = slot[y];
    }

    let mut merged = vec![0.0; kept.len()];
    for (&l, &w) in tau.labels.iter().zip(tau.masses) {
        merged[phi[l]] += w;
    }
    if let Some((k, v)) = merged.iter().enumerate().find(|(_, &v)| v < threshold * (1.0 - 1e-12)) {
        return Err(MzError::InvariantViolated(format!("merged cell {k} has tau mass {v:.3e} < {threshold:.3e}")));
    }
    for (p, &l) in tau.points.iter().zip(tau.labels) {
        let y = &centers[kept[phi[l]]];
        if m.distance(p, y) > 3.0 * radius + BALL_SLACK {
            return Err(MzError::InvariantViolated(format!("merged cell of center {} leaves B(y, 3 radius)", kept[phi[l]])));
        }
    }
    Ok(MergeStage {
        tau: tau_name.to_string(),
        radius,
        delta_a,
        gamma: if delta_a > 0.0 { radius / delta_a } else { f64::INFINITY },
        min_ball_mass,
        threshold_c,
        kept,
        phi,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mu_mass: f64,
    pub nu_mass: f64,
}

/// Observed values from the invariant audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionAudit {
    pub audit_points: usize,
    /// `max rho(p, x_k) / d` over audited points `p in Y_k`.
    pub containment_ratio: f64,
    /// `min, max` of `mu(Y_k) / d^alpha`.
    pub band: (f64, f64),
    pub min_nu_mass: f64,
    /// `q(C) / 2` and `delta(C)` for `C = {x_k}`.
    pub half_separation: f64,
    pub center_mesh: f64,
    /// `min_k |nu|(Y_k) / min_{x in G1} |nu|(B(x, d/4))` (infinite if the
    /// denominator vanishes).
    pub nu_cell_ratio: f64,
}

/// Mass grid with the final cell label of each node.
#[derive(Clone, Debug)]
pub struct LabeledGrid {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Partition {
    pub kind: ManifoldKind,
    pub d: f64,
    /// Stage-1 centers `G1` and covering radius of the stage-1 cells.
    pub base_centers: Vec<Point>,
    pub base_radius: f64,
    /// Merges with `tau = mu`, `tau = |nu|` and `tau` = unit atoms on `G3`.
    pub merge_chain: Vec<MergeStage>,
    /// Stage-1 cells use the nearest-center rule.
    #[serde(default)]
    pub nearest: bool,
    /// Centers `y_k` of the final cells (elements of the last kept set).
    pub cell_centers: Vec<Point>,
    /// Representatives `x_k in Y_k`, taken from `G3`.
    pub final_centers: Vec<Point>,
    pub cells: Vec<CellStats>,
    pub mass_grid_spacing: f64,
    pub audit: Option<PartitionAudit>,
    #[serde(skip)]
    base: OnceLock<Arc<BaseCells>>,
    #[serde(skip)]
    grid: OnceLock<Arc<LabeledGrid>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionOptions {
    /// Accept scales above `1/81`.
    pub relax_d: bool,
    /// Mass-grid spacing as a fraction of `d` (default `1/4`).
    pub mass_fraction: f64,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions {
            relax_d: false,
            mass_fraction: 0.25,
        }
    }
}

impl Partition {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn manifold(&self) -> Manifold {
        Manifold::new(self.kind)
    }

    fn base(&self) -> &BaseCells {
        self.base
            .get_or_init(|| {
                let mut b = BaseCells::new(self.kind, self.base_centers.clone(), self.base_radius);
                b.nearest = self.nearest;
                Arc::new(b)
            })
    }

    /// Final cell of `p`, replaying the first-index rule and the merge maps.
    pub fn cell_of(&self, p: &Point) -> Option<usize> {
        let mut k = self.base().cell_of(p)?;
        for stage in &self.merge_chain {
            k = stage.phi[k];
        }
        Some(k)
    }

    /// The mass grid with final labels (rebuilt after loading a dump).
    pub fn labeled_grid(&self) -> Arc<LabeledGrid> {
        self.grid
            .get_or_init(|| {
                let g = self.manifold().area_grid(self.mass_grid_spacing);
                let labels = g.points.iter().map(|p| self.cell_of(p).expect("mass grid is covered")).collect();
                Arc::new(LabeledGrid {
                    points: g.points,
                    weights: g.weights,
                    labels,
                })
            })
            .clone()
    }

    /// Cell labels of the atoms of an atomic measure (or of any point list).
    pub fn labels_of(&self, points: &[Point]) -> Result<Vec<usize>> {
        points
            .iter()
            .map(|p| {
                self.cell_of(p).ok_or(MzError::OrphanPoints {
                    orphans: 1,
                    delta: self.base_radius,
                })
            })
            .collect()
    }

    /// Node masses of `|nu|` with their cell labels: the atoms, or the mass
    /// grid weighted by the density.
    pub fn nu_atoms(&self, nu: &SignedMeasure) -> Result<(Vec<Point>, Vec<f64>, Vec<usize>)> {
        if nu.kind() != self.kind {
            return Err(MzError::ManifoldMismatch {
                expected: self.kind.to_string(),
                found: nu.kind().to_string(),
            });
        }
        match nu {
            SignedMeasure::Atomic { atoms, .. } => {
                let pts: Vec<Point> = atoms.iter().map(|a| a.0).collect();
                let labels = self.labels_of(&pts)?;
                Ok((pts, atoms.iter().map(|a| a.1.abs()).collect(), labels))
            }
            _ => {
                let g = self.labeled_grid();
                let w = g
                    .points
                    .iter()
                    .zip(&g.weights)
                    .map(|(p, q)| q * nu.density_at(p).unwrap_or(0.0).abs())
                    .collect();
                Ok((g.points.clone(), w, g.labels.clone()))
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("partition serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| MzError::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Nearest-center partition (no merges) with the given centers as both
    /// `y_k` and `x_k`; fails unless every center lies in its own cell.
    pub fn single_stage(nu: &SignedMeasure, centers: Vec<Point>, mass_spacing: f64) -> Result<Self> {
        let m = nu.manifold();
        let grid = m.area_grid(mass_spacing);
        let set = PointSet::new(m.kind, centers.clone())?;
        let delta = mesh_norm(&set, &grid.points)? + mass_spacing;
        let mut base = base_partition(&set, delta, &grid.points)?;
        base.nearest = true;
        let labels: Vec<usize> = grid.points.iter().map(|p| base.cell_of(p).expect("covered")).collect();
        for (k, c) in centers.iter().enumerate() {
            if base.cell_of(c) != Some(k) {
                return Err(MzError::InvariantViolated(format!("center {k} is not in its own stage-1 cell")));
            }
        }
        let mut p = Partition {
            kind: m.kind,
            d: delta,
            base_centers: centers.clone(),
            base_radius: delta,
            merge_chain: Vec::new(),
            nearest: true,
            cell_centers: centers.clone(),
            final_centers: centers,
            cells: Vec::new(),
            mass_grid_spacing: mass_spacing,
            audit: None,
            base: OnceLock::new(),
            grid: OnceLock::new(),
        };
        let _ = p.base.set(Arc::new(base));
        let _ = p.grid.set(Arc::new(LabeledGrid {
            points: grid.points,
            weights: grid.weights,
            labels,
        }));
        p.cells = p.compute_stats(nu)?;
        Ok(p)
    }

    fn compute_stats(&self, nu: &SignedMeasure) -> Result<Vec<CellStats>> {
        let n = self.cell_centers.len();
        let g = self.labeled_grid();
        let mut stats = vec![CellStats { mu_mass: 0.0, nu_mass: 0.0 }; n];
        for (&l, &w) in g.labels.iter().zip(&g.weights) {
            stats[l].mu_mass += w;
        }
        let (_, w, labels) = self.nu_atoms(nu)?;
        for (&l, &w) in labels.iter().zip(&w) {
            stats[l].nu_mass += w;
        }
        Ok(stats)
    }

    /// Checks the partition invariants on `probe` and the mass grid and
    /// records the observed constants.
    pub fn run_audit(&self, nu: &SignedMeasure, probe: &[Point]) -> Result<PartitionAudit> {
        let m = self.manifold();
        let g = self.labeled_grid();
        let mut ratio: f64 = 0.0;
        let limit = CONTAINMENT_FACTOR * self.d;
        let probe_labels = self.labels_of(probe)?;
        for (p, &k) in probe.iter().zip(&probe_labels).chain(g.points.iter().zip(&g.labels)) {
            let r = m.distance(p, &self.final_centers[k]);
            if r > limit + BALL_SLACK {
                return Err(MzError::InvariantViolated(format!("cell {k} reaches distance {r} > 81 d = {limit}")));
            }
            ratio = ratio.max(r / self.d);
        }
        for (k, x) in self.final_centers.iter().enumerate() {
            if self.cell_of(x) != Some(k) {
                return Err(MzError::InvariantViolated(format!("x_{k} is not in Y_{k}")));
            }
        }
        let scale = self.d.powf(m.alpha());
        let lo = self.cells.iter().map(|c| c.mu_mass / scale).fold(f64::INFINITY, f64::min);
        let hi = self.cells.iter().map(|c| c.mu_mass / scale).fold(0.0, f64::max);
        if !(lo > 0.0) {
            return Err(MzError::InvariantViolated("a cell has zero mu-mass".into()));
        }
        let min_nu = self.cells.iter().map(|c| c.nu_mass).fold(f64::INFINITY, f64::min);
        if !(min_nu > 0.0) {
            return Err(MzError::InvariantViolated("a cell has zero |nu|-mass".into()));
        }
        let cset = PointSet::from_points_unchecked(self.kind, self.final_centers.clone());
        let center_mesh = mesh_norm(&cset, probe)?;
        let half_separation = if cset.len() >= 2 { min_separation(&cset)? / 2.0 } else { 0.0 };
        let tol = self.mass_grid_spacing;
        if half_separation > center_mesh + tol || center_mesh > limit {
            return Err(MzError::InvariantViolated(format!(
                "center set violates q/2 <= delta <= 81 d: q/2 = {half_separation}, delta = {center_mesh}"
            )));
        }
        let probe_nu = crate::measures::MassProbe::new(nu, self.d / 4.0);
        let g1_min = self
            .base_centers
            .iter()
            .map(|x| probe_nu.mass(x, self.d / 4.0))
            .fold(f64::INFINITY, f64::min);
        Ok(PartitionAudit {
            audit_points: probe.len() + g.points.len(),
            containment_ratio: ratio,
            band: (lo, hi),
            min_nu_mass: min_nu,
            half_separation,
            center_mesh,
            nu_cell_ratio: if g1_min > 0.0 { min_nu / g1_min } else { f64::INFINITY },
        })
    }
}

/// Builds the partition at scale `d` for `nu`, auditing it on `probe`.
///
/// Pipeline: `G1` maximal `d/2`-separated subset of the support; stage-1
/// cells at radius `delta(G1) + h` (`h` the mass-grid spacing); merges with
/// `tau = mu`, `tau = |nu|` and unit atoms on `G3`; `x_k` the first `G3`
/// element in each final cell.
pub fn build_mz_partition(nu: &SignedMeasure, d: f64, probe: &[Point], opts: PartitionOptions) -> Result<Partition> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(invalid("d", format!("scale must be positive, got {d}")));
    }
    if nu.is_zero() {
        return Err(MzError::EmptySupport);
    }
    if !(opts.mass_fraction > 0.0 && opts.mass_fraction <= 1.0) {
        return Err(invalid("mass_fraction", "must lie in (0, 1]"));
    }
    let m = nu.manifold();
    let support_mesh = support_mesh_norm(nu, probe)?;
    if d > MAX_SCALE && !opts.relax_d {
        return Err(MzError::ScaleOutOfRange {
            d,
            support_mesh,
            upper: MAX_SCALE,
        });
    }
    if support_mesh >= d {
        return Err(MzError::SupportTooSparse { support_mesh, d });
    }
    let h = opts.mass_fraction * d;
    let grid: MassGrid = m.area_grid(h);
    let support = match nu {
        SignedMeasure::Atomic { .. } => nu.support_points(&[]),
        _ => nu.support_points(&grid.points),
    };
    let g1 = max_separated_subset(&PointSet::new(m.kind, support)?, d / 2.0)?;
    let all_probe: Vec<Point> = probe.iter().chain(grid.points.iter()).copied().collect();
    let delta1 = mesh_norm(&g1, &all_probe)?;
    let base_radius = delta1 + h;
    let base = base_partition(&g1, base_radius, &all_probe)?;

    let grid_labels1: Vec<usize> = grid.points.iter().map(|p| base.cell_of(p).expect("covered")).collect();

    // stage 2: tau = mu
    let s1 = merge_partition(
        m.kind,
        &g1.points,
        &TauAtoms {
            points: &grid.points,
            masses: &grid.weights,
            labels: &grid_labels1,
        },
        base_radius,
        delta1,
        "mu",
    )?;
    let g2: Vec<Point> = s1.kept.iter().map(|&i| g1.points[i]).collect();

    // stage 3: tau = |nu|
    let (nu_pts, nu_w, nu_labels1): (Vec<Point>, Vec<f64>, Vec<usize>) = match nu {
        SignedMeasure::Atomic { atoms, .. } => {
            let pts: Vec<Point> = atoms.iter().map(|a| a.0).collect();
            let labels = pts
                .iter()
                .map(|p| base.cell_of(p).ok_or(MzError::OrphanPoints { orphans: 1, delta: base_radius }))
                .collect::<Result<Vec<_>>>()?;
            (pts, atoms.iter().map(|a| a.1.abs()).collect(), labels)
        }
        _ => {
            let w = grid
                .points
                .iter()
                .zip(&grid.weights)
                .map(|(p, q)| q * nu.density_at(p).unwrap_or(0.0).abs())
                .collect();
            (grid.points.clone(), w, grid_labels1.clone())
        }
    };
    let nu_labels2: Vec<usize> = nu_labels1.iter().map(|&l| s1.phi[l]).collect();
    let r2 = 3.0 * base_radius;
    let delta2 = mesh_norm(&PointSet::from_points_unchecked(m.kind, g2.clone()), &all_probe)?;
    let s2 = merge_partition(
        m.kind,
        &g2,
        &TauAtoms {
            points: &nu_pts,
            masses: &nu_w,
            labels: &nu_labels2,
        },
        r2,
        delta2,
        "|nu|",
    )?;
    let g3: Vec<Point> = s2.kept.iter().map(|&i| g2[i]).collect();

    // stage 4: tau = unit atoms on G3
    let g3_labels: Vec<usize> = g3
        .iter()
        .map(|p| base.cell_of(p).map(|l| s2.phi[s1.phi[l]]).ok_or(MzError::OrphanPoints { orphans: 1, delta: base_radius }))
        .collect::<Result<Vec<_>>>()?;
    let ones = vec![1.0; g3.len()];
    let r3 = 9.0 * base_radius;
    let delta3 = mesh_norm(&PointSet::from_points_unchecked(m.kind, g3.clone()), &all_probe)?;
    let s3 = merge_partition(
        m.kind,
        &g3,
        &TauAtoms {
            points: &g3,
            masses: &ones,
            labels: &g3_labels,
        },
        r3,
        delta3,
        "unit atoms on G3",
    )?;
    let cell_centers: Vec<Point> = s3.kept.iter().map(|&i| g3[i]).collect();
    let mut final_centers: Vec<Option<Point>> = vec![None; cell_centers.len()];
    for (p, &l) in g3.iter().zip(&g3_labels) {
        let k = s3.phi[l];
        if final_centers[k].is_none() {
            final_centers[k] = Some(*p);
        }
    }
    let final_centers = final_centers
        .into_iter()
        .enumerate()
        .map(|(k, c)| c.ok_or_else(|| MzError::InvariantViolated(format!("final cell {k} holds no G3 point"))))
        .collect::<Result<Vec<_>>>()?;

    let grid_labels: Vec<usize> = grid_labels1.iter().map(|&l| s3.phi[s2.phi[s1.phi[l]]]).collect();
    let mut part = Partition {
        kind: m.kind,
        d,
        base_centers: g1.points.clone(),
        base_radius,
        merge_chain: vec![s1, s2, s3],
        nearest: false,
        cell_centers,
        final_centers,
        cells: Vec::new(),
        mass_grid_spacing: h,
        audit: None,
        base: OnceLock::new(),
        grid: OnceLock::new(),
    };
    let _ = part.base.set(Arc::new(base));
    let _ = part.grid.set(Arc::new(LabeledGrid {
        points: grid.points,
        weights: grid.weights,
        labels: grid_labels,
    }));
    part.cells = part.compute_stats(nu)?;
    part.audit = Some(part.run_audit(nu, probe)?);
    Ok(part)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{PI, TAU};

    fn circle_atoms(n: usize) -> Vec<Point> {
        (0..n).map(|k| Point::circle(TAU * k as f64 / n as f64)).collect()
    }

    #[test]
    fn base_partition_first_index_rule() {
        let k = ManifoldKind::Circle;
        let g1 = PointSet::new(k, vec![Point::circle(0.0), Point::circle(PI)]).unwrap();
        let probe = Manifold::circle().grid(1e-3);
        let cells = base_partition(&g1, PI / 2.0 + 0.1, &probe).unwrap();
        // the overlap around pi/2 goes to the lower index
        assert_eq!(cells.cell_of(&Point::circle(PI / 2.0 + 0.05)), Some(0));
        assert_eq!(cells.cell_of(&Point::circle(PI / 2.0 + 0.15)), Some(1));
        for p in &probe {
            let l = cells.cell_of(p).unwrap();
            let first = (0..2).find(|&i| Manifold::circle().distance(p, &g1.points[i]) <= PI / 2.0 + 0.1 + BALL_SLACK);
            assert_eq!(Some(l), first);
        }
        assert!(matches!(base_partition(&g1, 1.0, &probe), Err(MzError::OrphanPoints { .. })));
    }

    #[test]
    fn merge_without_small_cells_is_identity() {
        let m = Manifold::circle();
        let a = circle_atoms(16);
        let grid = m.area_grid(0.01);
        let set = PointSet::new(m.kind, a.clone()).unwrap();
        let delta = mesh_norm(&set, &grid.points).unwrap() + 0.01;
        let base = base_partition(&set, delta, &grid.points).unwrap();
        let labels: Vec<usize> = grid.points.iter().map(|p| base.cell_of(p).unwrap()).collect();
        let tau = TauAtoms {
            points: &grid.points,
            masses: &grid.weights,
            labels: &labels,
        };
        let st = merge_partition(m.kind, &a, &tau, delta, delta - 0.01, "mu").unwrap();
        assert_eq!(st.kept, (0..16).collect::<Vec<_>>());
        assert_eq!(st.phi, (0..16).collect::<Vec<_>>());
        // exhaustive containment check on the grid
        for (p, &l) in grid.points.iter().zip(&labels) {
            assert!(m.distance(p, &a[st.kept[st.phi[l]]]) <= 3.0 * delta);
        }
    }

    #[test]
    fn merge_two_cells_with_one_empty() {
        let m = Manifold::circle();
        let a = vec![Point::circle(0.0), Point::circle(0.2)];
        let pts = vec![Point::circle(0.1), Point::circle(-0.1)];
        let masses = vec![0.5, 0.5];
        let labels = vec![0, 0];
        let tau = TauAtoms {
            points: &pts,
            masses: &masses,
            labels: &labels,
        };
        let st = merge_partition(m.kind, &a, &tau, 0.15, 0.15, "tau").unwrap();
        assert_eq!(st.kept, vec![0]);
        assert_eq!(st.phi, vec![0, 0]);
        let total: f64 = masses.iter().sum();
        assert_abs_diff_eq!(total, 1.0);
        // a ball with no tau mass is rejected
        let far = vec![Point::circle(0.0), Point::circle(2.0)];
        assert!(matches!(merge_partition(m.kind, &far, &tau, 0.15, 0.15, "tau"), Err(MzError::NotDominant { .. })));
    }

    #[test]
    fn build_circle_equispaced_atoms() {
        let m = Manifold::circle();
        let nu = SignedMeasure::equal_atoms(m.kind, &circle_atoms(400), 1.0);
        let probe = m.grid_with_count(10_000).points;
        let p = build_mz_partition(&nu, 1.0 / 81.0, &probe, PartitionOptions::default()).unwrap();
        let audit = p.audit.clone().unwrap();
        assert!(audit.containment_ratio <= 81.0);
        assert!(audit.band.0 > 0.0);
        let total_mu: f64 = p.cells.iter().map(|c| c.mu_mass).sum();
        let total_nu: f64 = p.cells.iter().map(|c| c.nu_mass).sum();
        assert_abs_diff_eq!(total_mu, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(total_nu, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn build_with_full_support_density() {
        let m = Manifold::circle();
        let nu = SignedMeasure::uniform(m.kind);
        let probe = m.grid_with_count(10_000).points;
        let p = build_mz_partition(&nu, 0.01, &probe, PartitionOptions::default()).unwrap();
        assert!(p.cells.iter().all(|c| c.nu_mass > 0.0));
    }

    #[test]
    fn sparse_support_and_range_errors() {
        let m = Manifold::circle();
        let half: Vec<Point> = (0..500).map(|i| Point::circle(PI * i as f64 / 499.0)).collect();
        let nu = SignedMeasure::equal_atoms(m.kind, &half, 1.0);
        let probe = m.grid_with_count(10_000).points;
        assert!(matches!(
            build_mz_partition(&nu, 0.01, &probe, PartitionOptions::default()),
            Err(MzError::SupportTooSparse { .. })
        ));
        let mu = SignedMeasure::uniform(m.kind);
        assert!(matches!(
            build_mz_partition(&mu, 0.1, &probe, PartitionOptions::default()),
            Err(MzError::ScaleOutOfRange { .. })
        ));
        let relaxed = PartitionOptions {
            relax_d: true,
            ..Default::default()
        };
        assert!(build_mz_partition(&mu, 0.1, &probe, relaxed).is_ok());
    }

    #[test]
    fn dump_round_trip() {
        let m = Manifold::circle();
        let nu = SignedMeasure::equal_atoms(m.kind, &circle_atoms(400), 1.0);
        let probe = m.grid_with_count(2000).points;
        let p = build_mz_partition(&nu, 1.0 / 81.0, &probe, PartitionOptions::default()).unwrap();
        let back = Partition::from_json(&p.to_json()).unwrap();
        assert_eq!(back.to_json(), p.to_json());
        for q in &probe {
            assert_eq!(back.cell_of(q), p.cell_of(q));
        }
    }
}
