//! One pipeline per subcommand.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use mzlab::battery;
use mzlab::io::write_pointset;
use mzlab::kernels::{localization_report, LocalizationOptions};
use mzlab::manifolds::{eigen_system, SpectralBasis};
use mzlab::measures::{support_mesh_norm, SignedMeasure};
use mzlab::mzanalysis::{characterization_roundtrip, mz_constants_p2, mz_ratio_bounds, verify_strong_mz, MZReport};
use mzlab::partition::{build_mz_partition, MergeStage, Partition, PartitionAudit, PartitionOptions};
use mzlab::pointsets::{max_separated_subset, mesh_norm, min_separation, PointSet};
use mzlab::quadrature::{quadrature_residual, solve_positive_quadrature, verify_quadrature_mz, write_rule, QuadratureMzReport, QuadratureRule};
use mzlab::{Manifold, MzError};

use crate::config::{ConfigError, ExperimentConfig, Exponent, MzMethodChoice};
use crate::report::{num, Emitter};

#[derive(Debug)]
pub enum RunError {
    /// Bad configuration, input or environment (exit 1).
    Usage(String),
    /// A check did not hold or an invariant broke (exit 2).
    Assertion(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Usage(m) => write!(f, "usage error: {m}"),
            RunError::Assertion(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Usage(format!("cannot write report: {e}"))
    }
}

impl From<MzError> for RunError {
    fn from(e: MzError) -> Self {
        match e {
            MzError::InvariantViolated(_)
            | MzError::Infeasible { .. }
            | MzError::NotDominant { .. }
            | MzError::OrphanPoints { .. } => RunError::Assertion(e.to_string()),
            _ => RunError::Usage(e.to_string()),
        }
    }
}

pub type RunResult = Result<(), RunError>;

/// Runtime switches from the command line.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub relax_d: bool,
}

fn level_tag(l: f64) -> String {
    if l.fract() == 0.0 {
        format!("{}", l as u64)
    } else {
        format!("{l}")
    }
}

fn basis_for(kind: mzlab::ManifoldKind, level: f64) -> Result<Arc<SpectralBasis>, RunError> {
    Ok(Arc::new(eigen_system(&Manifold::new(kind), level)?))
}

fn max_level(levels: &[f64]) -> f64 {
    levels.iter().copied().fold(1.0, f64::max)
}

/// Runs `f`, and on error leaves a `status: "failed"` report at `name`.
fn guarded<T>(em: &mut Emitter, name: &str, f: impl FnOnce(&mut Emitter) -> Result<T, RunError>) -> Result<T, RunError> {
    match f(em) {
        Ok(v) => Ok(v),
        Err(e) => {
            em.failed(name, &e.to_string())?;
            Err(e)
        }
    }
}

#[derive(Serialize)]
struct PointsReport {
    manifold: String,
    support_points: usize,
    eps: Option<f64>,
    subset_points: usize,
    mesh_norm: f64,
    min_separation: Option<f64>,
    probe_spacing: f64,
}

pub fn points(cfg: &ExperimentConfig, em: &mut Emitter) -> RunResult {
    let kind = cfg.kind();
    let name = format!("points_{kind}.json");
    guarded(em, &name.clone(), |em| {
        let nu = cfg.measure()?;
        let m = Manifold::new(kind);
        let spacing = cfg.d.map(|d| cfg.probe_spacing(d)).unwrap_or(0.01);
        let grid = m.grid(spacing);
        let support = match &nu {
            SignedMeasure::Atomic { .. } => nu.support_points(&[]),
            _ => nu.support_points(&grid),
        };
        let all = PointSet::new(kind, support)?;
        let eps = cfg.points.as_ref().map(|p| p.eps);
        let set = match eps {
            Some(e) => max_separated_subset(&all, e)?,
            None => all.clone(),
        };
        let report = PointsReport {
            manifold: kind.to_string(),
            support_points: all.len(),
            eps,
            subset_points: set.len(),
            mesh_norm: mesh_norm(&set, &grid)?,
            min_separation: if set.len() >= 2 { Some(min_separation(&set)?) } else { None },
            probe_spacing: spacing,
        };
        em.text(&format!("points_{kind}.txt"), &write_pointset(&set))?;
        let rows: Vec<Vec<String>> = set.points.iter().map(|p| p.coords().into_iter().map(num).collect()).collect();
        let header: &[&str] = if kind.coord_count() == 1 { &["theta"] } else { &["a", "b"] };
        em.csv(&format!("points_{kind}.csv"), header, &rows)?;
        em.ok(&name, &report)?;
        Ok(())
    })
}

#[derive(Serialize)]
struct StageSummary {
    tau: String,
    radius: f64,
    gamma: f64,
    min_ball_mass: f64,
    threshold_c: f64,
    kept: usize,
}

impl From<&MergeStage> for StageSummary {
    fn from(s: &MergeStage) -> Self {
        StageSummary {
            tau: s.tau.clone(),
            radius: s.radius,
            gamma: s.gamma,
            min_ball_mass: s.min_ball_mass,
            threshold_c: s.threshold_c,
            kept: s.kept.len(),
        }
    }
}

#[derive(Serialize)]
struct PartitionReport {
    manifold: String,
    d: f64,
    support_mesh: f64,
    base_centers: usize,
    base_radius: f64,
    cells: usize,
    mass_grid_spacing: f64,
    stages: Vec<StageSummary>,
    audit: Option<PartitionAudit>,
}

fn build_partition(cfg: &ExperimentConfig, nu: &SignedMeasure, ov: Overrides) -> Result<Partition, RunError> {
    let d = cfg.require_d()?;
    let m = nu.manifold();
    let mut opts = PartitionOptions {
        relax_d: cfg.partition.relax_d || ov.relax_d,
        ..Default::default()
    };
    if let Some(f) = cfg.partition.mass_fraction {
        opts.mass_fraction = f;
    }
    let probe = m.grid(cfg.probe_spacing(d));
    Ok(build_mz_partition(nu, d, &probe, opts)?)
}

pub fn partition(cfg: &ExperimentConfig, em: &mut Emitter, ov: Overrides) -> RunResult {
    let kind = cfg.kind();
    let name = format!("partition_{kind}.json");
    guarded(em, &name.clone(), |em| {
        let nu = cfg.measure()?;
        let part = build_partition(cfg, &nu, ov)?;
        let d = part.d;
        let probe = nu.manifold().grid(cfg.probe_spacing(d));
        let report = PartitionReport {
            manifold: kind.to_string(),
            d,
            support_mesh: support_mesh_norm(&nu, &probe)?,
            base_centers: part.base_centers.len(),
            base_radius: part.base_radius,
            cells: part.len(),
            mass_grid_spacing: part.mass_grid_spacing,
            stages: part.merge_chain.iter().map(StageSummary::from).collect(),
            audit: part.audit.clone(),
        };
        em.text(&format!("partition_{kind}_dump.json"), &part.to_json())?;
        let rows: Vec<Vec<String>> = part
            .final_centers
            .iter()
            .zip(&part.cells)
            .enumerate()
            .map(|(k, (x, c))| {
                let mut r = vec![k.to_string()];
                r.extend(x.coords().into_iter().map(num));
                r.push(num(c.mu_mass));
                r.push(num(c.nu_mass));
                r
            })
            .collect();
        let header: &[&str] = if kind.coord_count() == 1 { &["cell", "theta", "mu_mass", "nu_mass"] } else { &["cell", "a", "b", "mu_mass", "nu_mass"] };
        em.csv(&format!("partition_{kind}_cells.csv"), header, &rows)?;
        em.ok(&name, &report)?;
        Ok(())
    })
}

fn mz_one(cfg: &ExperimentConfig, nu: &SignedMeasure, basis: &Arc<SpectralBasis>, level: f64, p: Exponent) -> Result<MZReport, RunError> {
    let r = if p.0 == 2.0 && cfg.mz.method == MzMethodChoice::Auto {
        mz_constants_p2(nu, basis, level)?
    } else {
        mz_ratio_bounds(nu, basis.clone(), level, p.0, cfg.trials, cfg.require_seed()?)?
    };
    if !(r.c1 <= r.c2 * (1.0 + 1e-12)) || !r.c2.is_finite() {
        return Err(RunError::Assertion(format!("inconsistent MZ bounds c1 = {}, c2 = {}", r.c1, r.c2)));
    }
    Ok(r)
}

pub fn mz(cfg: &ExperimentConfig, em: &mut Emitter, ov: Overrides) -> RunResult {
    let kind = cfg.kind();
    let levels = cfg.require_levels()?.to_vec();
    let ps = if cfg.p.is_empty() { vec![Exponent(2.0)] } else { cfg.p.clone() };
    let nu = guarded(em, &format!("mz_{kind}.json"), |_| Ok(cfg.measure()?))?;
    let basis = guarded(em, &format!("mz_{kind}.json"), |_| basis_for(kind, max_level(&levels)))?;
    let strong_part = match cfg.d {
        Some(_) => Some(guarded(em, &format!("mz_{kind}_partition.json"), |_| build_partition(cfg, &nu, ov))?),
        None => None,
    };
    let mut rows = Vec::new();
    let mut first_err = None;
    for &level in &levels {
        for &p in &ps {
            let tag = format!("{kind}_L{}_p{p}", level_tag(level));
            let name = format!("mz_{tag}.json");
            let res = guarded(em, &name, |_| mz_one(cfg, &nu, &basis, level, p));
            match res {
                Ok(r) => {
                    em.ok(&name, &r)?;
                    rows.push(vec![num(level), p.to_string(), serde_json::to_value(r.method).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(), num(r.c1), num(r.c2)]);
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                    continue;
                }
            }
            if cfg.mz.characterization && p.0.is_finite() {
                let cname = format!("char_{tag}.json");
                let out = guarded(em, &cname, |_| Ok(characterization_roundtrip(&nu, basis.clone(), level, p.0, cfg.trials, cfg.require_seed()?)?));
                match out {
                    Ok(c) => em.ok(&cname, &c)?,
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            if let (Some(part), true) = (&strong_part, p.0.is_finite()) {
                let sname = format!("strong_{tag}.json");
                let out = guarded(em, &sname, |_| Ok(verify_strong_mz(&nu, part, basis.clone(), level, p.0, cfg.trials, cfg.require_seed()?)?));
                match out {
                    Ok(s) => em.ok(&sname, &s)?,
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
        }
    }
    em.csv(&format!("mz_{kind}.csv"), &["L", "p", "method", "c1", "c2"], &rows)?;
    first_err.map_or(Ok(()), Err)
}

#[derive(Serialize)]
struct QuadReport<'a> {
    rule: &'a QuadratureRule,
    residual_check: f64,
    verification: Option<QuadratureMzReport>,
}

pub fn quad(cfg: &ExperimentConfig, em: &mut Emitter, ov: Overrides) -> RunResult {
    let kind = cfg.kind();
    let levels = cfg.require_levels()?.to_vec();
    let setup = format!("quad_{kind}.json");
    let nu = guarded(em, &setup, |_| Ok(cfg.measure()?))?;
    let part = guarded(em, &setup, |_| build_partition(cfg, &nu, ov))?;
    let basis = guarded(em, &setup, |_| basis_for(kind, max_level(&levels)))?;
    let mut first_err = None;
    let mut rows = Vec::new();
    for &level in &levels {
        let tag = format!("{kind}_L{}", level_tag(level));
        let name = format!("quad_{tag}.json");
        let out = guarded(em, &name, |_| {
            let rule = solve_positive_quadrature(&nu, &part, &basis, level, cfg.quad.mode)?;
            let residual_check = quadrature_residual(&rule, &basis, level)?;
            let target = (level / (2.0 * cfg.quad.astar)).floor();
            let verification = if cfg.quad.verify && target >= 1.0 {
                Some(verify_quadrature_mz(&rule, basis.clone(), target, 2.0, cfg.trials, cfg.require_seed()?, cfg.quad.astar)?)
            } else {
                None
            };
            Ok((rule, residual_check, verification))
        });
        match out {
            Ok((rule, residual_check, verification)) => {
                em.text(&format!("quad_{tag}.rule"), &write_rule(&rule))?;
                let wrows: Vec<Vec<String>> = rule
                    .weights
                    .iter()
                    .zip(&rule.cells)
                    .enumerate()
                    .map(|(k, (w, c))| vec![k.to_string(), num(*w), num(c.mu_mass), num(w / c.mu_mass)])
                    .collect();
                em.csv(&format!("quad_{tag}_weights.csv"), &["cell", "weight", "mu_mass", "ratio"], &wrows)?;
                rows.push(vec![num(level), num(rule.residual), num(rule.min_weight_ratio), rule.t.map(num).unwrap_or_default()]);
                em.ok(
                    &name,
                    &QuadReport {
                        rule: &rule,
                        residual_check,
                        verification,
                    },
                )?;
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    em.csv(&format!("quad_{kind}.csv"), &["L", "residual", "min_weight_ratio", "t"], &rows)?;
    first_err.map_or(Ok(()), Err)
}

pub fn kernel(cfg: &ExperimentConfig, em: &mut Emitter) -> RunResult {
    let kind = cfg.kind();
    let name = format!("kernel_{kind}.json");
    guarded(em, &name.clone(), |em| {
        let mut opts = LocalizationOptions::default();
        if !cfg.levels.is_empty() {
            opts.levels = cfg.levels.clone();
        }
        opts.s_values = cfg.kernel.s_values.clone();
        if let Some(n) = cfg.kernel.points_per_inv_level {
            opts.points_per_inv_level = n;
        }
        if let Some(t) = &cfg.kernel.heat_times {
            opts.heat_times = t.clone();
        }
        let basis = basis_for(kind, max_level(&opts.levels))?;
        let r = localization_report(&basis, &opts)?;
        let s_values = r.s_values.clone();
        let mut header: Vec<String> = vec!["L".into(), "l1_norm".into(), "beta_hat".into(), "christoffel_lo".into(), "christoffel_hi".into()];
        header.extend(s_values.iter().map(|s| format!("c_S{s}")));
        let rows: Vec<Vec<String>> = r
            .rows
            .iter()
            .map(|row| {
                let mut v = vec![num(row.level), num(row.l1_norm), num(row.beta_hat), num(row.christoffel_band.0), num(row.christoffel_band.1)];
                v.extend(row.c_s.iter().map(|c| num(c.c)));
                v
            })
            .collect();
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        em.csv(&format!("kernel_{kind}.csv"), &h, &rows)?;
        em.ok(&name, &r)?;
        Ok(())
    })
}

#[derive(Serialize)]
struct BatteryEntry {
    id: u32,
    name: String,
    passed: bool,
    detail: String,
    budget_seconds: Option<f64>,
}

/// Runs the acceptance battery; timings go to stdout only, so the report
/// bytes stay reproducible.
pub fn verify_all(em: &mut Emitter) -> RunResult {
    let mut entries = Vec::new();
    for (id, _, _) in battery::CRITERIA {
        let r = battery::run_criterion(id);
        println!("{}", r.line());
        entries.push(BatteryEntry {
            id: r.id,
            name: r.name,
            passed: r.passed,
            detail: r.detail,
            budget_seconds: r.budget,
        });
    }
    let rows: Vec<Vec<String>> = entries.iter().map(|e| vec![e.id.to_string(), e.name.clone(), e.passed.to_string()]).collect();
    em.csv("verify_all.csv", &["id", "name", "passed"], &rows)?;
    let failed: Vec<u32> = entries.iter().filter(|e| !e.passed).map(|e| e.id).collect();
    if failed.is_empty() {
        em.ok("verify_all.json", &entries)?;
        Ok(())
    } else {
        let msg = format!("criteria {failed:?} failed");
        em.failed_with("verify_all.json", &msg, &entries)?;
        Err(RunError::Assertion(msg))
    }
}
