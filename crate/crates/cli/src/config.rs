//! Experiment configuration: TOML with one level of sections.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use mzlab::io::measure_from_json;
use mzlab::measures::{SignedMeasure, WeightFunction};
use mzlab::mzanalysis::equispaced_circle;
use mzlab::pointsets::{fibonacci_sphere, jittered_circle};
use mzlab::quadrature::SolveMode;
use mzlab::{ManifoldKind, Point};

#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.message)
    }
}

fn bad(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        message: message.into(),
    }
}

/// An exponent `p`: a number, or the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exponent(pub f64);

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(i) => Ok(Exponent(i as f64)),
            Raw::Num(v) => Ok(Exponent(v)),
            Raw::Text(t) if t == "inf" => Ok(Exponent(f64::INFINITY)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", found {t:?}"))),
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Uniform,
    Equispaced {
        n: usize,
        #[serde(default)]
        phase: f64,
    },
    Jittered {
        n: usize,
        #[serde(default = "default_jitter")]
        jitter: f64,
    },
    /// Equal atoms on `[0.05, pi - 0.05]`.
    HalfCircle {
        n: usize,
    },
    Fibonacci {
        n: usize,
    },
    Density {
        weight: WeightFunction,
    },
    /// Coordinates followed by the weight.
    Atomic {
        atoms: Vec<Vec<f64>>,
    },
    /// A measure JSON file, relative to the config file.
    File {
        path: PathBuf,
    },
}

fn default_jitter() -> f64 {
    0.3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsSection {
    /// Separation radius of the greedy subset.
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    #[serde(default)]
    pub relax_d: bool,
    pub mass_fraction: Option<f64>,
    /// Probe grid spacing (default `d / 10`).
    pub probe_spacing: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MzMethodChoice {
    /// Gram eigenvalues at `p = 2`, sampling otherwise.
    #[default]
    Auto,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MzSection {
    #[serde(default)]
    pub method: MzMethodChoice,
    /// Also run the regularity/dominance round trip.
    #[serde(default)]
    pub characterization: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSection {
    #[serde(default = "default_mode")]
    pub mode: SolveMode,
    /// Check the MZ property of the rule at `L / (2 astar)`.
    #[serde(default)]
    pub verify: bool,
    #[serde(default = "default_astar")]
    pub astar: f64,
}

impl Default for QuadSection {
    fn default() -> Self {
        QuadSection {
            mode: default_mode(),
            verify: false,
            astar: default_astar(),
        }
    }
}

fn default_mode() -> SolveMode {
    SolveMode::LpMaximin
}

fn default_astar() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default)]
    pub s_values: Vec<u32>,
    pub points_per_inv_level: Option<usize>,
    pub heat_times: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifold: String,
    #[serde(rename = "L", default)]
    pub levels: Vec<f64>,
    #[serde(default)]
    pub p: Vec<Exponent>,
    pub d: Option<f64>,
    pub seed: Option<u64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub out: Option<PathBuf>,
    pub measure: Option<MeasureSpec>,
    pub points: Option<PointsSection>,
    #[serde(default)]
    pub partition: PartitionSection,
    #[serde(default)]
    pub mz: MzSection,
    #[serde(default)]
    pub quad: QuadSection,
    #[serde(default)]
    pub kernel: KernelSection,
    /// Directory of the config file, for relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_trials() -> usize {
    20
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| field_at(text, s.start)).unwrap_or_else(|| "<document>".into());
            bad(field, e.message().to_string())
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn kind(&self) -> ManifoldKind {
        ManifoldKind::parse(&self.manifold).expect("validated")
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if ManifoldKind::parse(&self.manifold).is_none() {
            return Err(bad("manifold", format!("unknown manifold {:?} (circle, sphere2, torus2)", self.manifold)));
        }
        for &l in &self.levels {
            if !(l >= 1.0 && l.is_finite()) {
                return Err(bad("L", format!("levels must be >= 1, got {l}")));
            }
        }
        for p in &self.p {
            if !(p.0 >= 1.0) {
                return Err(bad("p", format!("exponents must be >= 1 or \"inf\", got {}", p.0)));
            }
        }
        if let Some(d) = self.d {
            if !(d > 0.0 && d.is_finite()) {
                return Err(bad("d", format!("must be positive, got {d}")));
            }
        }
        if self.trials == 0 {
            return Err(bad("trials", "must be at least 1"));
        }
        if let Some(f) = self.partition.mass_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(bad("partition.mass_fraction", format!("must lie in (0, 1], got {f}")));
            }
        }
        if let Some(h) = self.partition.probe_spacing {
            if !(h > 0.0) {
                return Err(bad("partition.probe_spacing", format!("must be positive, got {h}")));
            }
        }
        if let Some(pt) = &self.points {
            if !(pt.eps > 0.0) {
                return Err(bad("points.eps", format!("must be positive, got {}", pt.eps)));
            }
        }
        if !(self.quad.astar >= 1.0) {
            return Err(bad("quad.astar", format!("must be >= 1, got {}", self.quad.astar)));
        }
        if let Some(ppl) = self.kernel.points_per_inv_level {
            if ppl == 0 {
                return Err(bad("kernel.points_per_inv_level", "must be positive"));
            }
        }
        if let Some(ts) = &self.kernel.heat_times {
            if ts.iter().any(|t| !(*t > 0.0)) {
                return Err(bad("kernel.heat_times", "times must be positive"));
            }
        }
        if let Some(m) = &self.measure {
            let n = match m {
                MeasureSpec::Equispaced { n, .. } | MeasureSpec::Jittered { n, .. } | MeasureSpec::HalfCircle { n } | MeasureSpec::Fibonacci { n } => Some(*n),
                _ => None,
            };
            if n == Some(0) {
                return Err(bad("measure.n", "must be positive"));
            }
            let kind = self.kind();
            let circle_only = matches!(m, MeasureSpec::Equispaced { .. } | MeasureSpec::Jittered { .. } | MeasureSpec::HalfCircle { .. });
            if circle_only && kind != ManifoldKind::Circle {
                return Err(bad("measure.type", format!("this measure lives on the circle, not {kind}")));
            }
            if matches!(m, MeasureSpec::Fibonacci { .. }) && kind != ManifoldKind::Sphere2 {
                return Err(bad("measure.type", "fibonacci points live on sphere2"));
            }
            if let MeasureSpec::Jittered { jitter, .. } = m {
                if !(0.0..0.5).contains(jitter) {
                    return Err(bad("measure.jitter", format!("must lie in [0, 0.5), got {jitter}")));
                }
                if self.seed.is_none() {
                    return Err(bad("seed", "required by the jittered measure"));
                }
            }
        }
        Ok(())
    }

    pub fn require_levels(&self) -> Result<&[f64], ConfigError> {
        if self.levels.is_empty() {
            return Err(bad("L", "at least one level is required"));
        }
        Ok(&self.levels)
    }

    pub fn require_d(&self) -> Result<f64, ConfigError> {
        self.d.ok_or_else(|| bad("d", "required by this command"))
    }

    pub fn require_seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or_else(|| bad("seed", "required by this command (randomized trials)"))
    }

    pub fn measure(&self) -> Result<SignedMeasure, ConfigError> {
        let kind = self.kind();
        let chosen = self.measure.as_ref().ok_or_else(|| bad("measure", "a [measure] section is required"))?;
        let nu = match chosen {
            MeasureSpec::Uniform => SignedMeasure::uniform(kind),
            MeasureSpec::Equispaced { n, phase } => equispaced_circle(*n, *phase),
            MeasureSpec::Jittered { n, jitter } => SignedMeasure::equal_atoms(kind, &jittered_circle(*n, *jitter, self.seed.expect("validated")).points, 1.0),
            MeasureSpec::HalfCircle { n } => {
                let pts: Vec<Point> = (0..*n).map(|k| Point::circle(0.05 + (PI - 0.1) * k as f64 / (*n).max(2).saturating_sub(1) as f64)).collect();
                SignedMeasure::equal_atoms(kind, &pts, 1.0)
            }
            MeasureSpec::Fibonacci { n } => SignedMeasure::equal_atoms(kind, &fibonacci_sphere(*n).points, 1.0),
            MeasureSpec::Density { weight } => {
                weight.validate().map_err(|e| bad("measure.weight", e.to_string()))?;
                SignedMeasure::Density { kind, weight: weight.clone() }
            }
            MeasureSpec::Atomic { atoms } => {
                let n = kind.coord_count();
                let atoms = atoms
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        if a.len() != n + 1 {
                            return Err(bad(format!("measure.atoms[{i}]"), format!("expected {} numbers, found {}", n + 1, a.len())));
                        }
                        let p = Point::from_coords(kind, &a[..n]).map_err(|e| bad(format!("measure.atoms[{i}]"), e.to_string()))?;
                        Ok((p, a[n]))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                SignedMeasure::atomic(kind, atoms)
            }
            MeasureSpec::File { path } => {
                let full = self.base_dir.join(path);
                let text = std::fs::read_to_string(&full).map_err(|e| bad("measure.path", format!("{}: {e}", full.display())))?;
                let nu = measure_from_json(&text).map_err(|e| bad("measure.path", e.to_string()))?;
                if nu.kind() != kind {
                    return Err(bad("measure.path", format!("file holds a {} measure, config says {kind}", nu.kind())));
                }
                nu
            }
        };
        if nu.kind() != kind {
            return Err(bad("measure", format!("measure lives on {}, config says {kind}", nu.kind())));
        }
        Ok(nu)
    }

    /// Probe grid spacing for partitions at scale `d`.
    pub fn probe_spacing(&self, d: f64) -> f64 {
        self.partition.probe_spacing.unwrap_or(d / 10.0).min(TAU / 64.0)
    }
}

/// Dotted path of the key at byte offset `pos`, from the enclosing
/// `[section]` header and the key at the start of the line.
fn field_at(text: &str, pos: usize) -> String {
    let before = &text[..pos.min(text.len())];
    let section = before
        .lines()
        .rev()
        .find_map(|l| {
            let t = l.trim();
            t.strip_prefix('[').and_then(|r| r.strip_suffix(']')).map(str::to_string)
        })
        .unwrap_or_default();
    let line_start = before.rfind('\n').map(|i| i + 1).unwrap_or(0);
    let line = text[line_start..].lines().next().unwrap_or("");
    let key = line.split('=').next().unwrap_or("").trim();
    let key = if key.starts_with('[') || key.is_empty() { String::new() } else { key.to_string() };
    match (section.is_empty(), key.is_empty()) {
        (true, true) => "<document>".into(),
        (true, false) => key,
        (false, true) => section,
        (false, false) => format!("{section}.{key}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::parse(s, Path::new("."))
    }

    #[test]
    fn minimal_and_full() {
        let c = parse("manifold = \"circle\"\nL = [8]\np = [2, 1.5, \"inf\"]\nseed = 3\n[measure]\ntype = \"equispaced\"\nn = 17\n").unwrap();
        assert_eq!(c.levels, vec![8.0]);
        assert_eq!(c.p, vec![Exponent(2.0), Exponent(1.5), Exponent(f64::INFINITY)]);
        assert_eq!(c.measure().unwrap(), equispaced_circle(17, 0.0));
    }

    #[test]
    fn diagnostics_name_the_field() {
        let e = parse("manifold = \"circle\"\nd = -1\n").unwrap_err();
        assert_eq!(e.field, "d");
        let e = parse("manifold = \"circle\"\n[partition]\nmass_fraction = 3\n").unwrap_err();
        assert_eq!(e.field, "partition.mass_fraction");
        let e = parse("manifold = \"circle\"\nL = \"eight\"\n").unwrap_err();
        assert_eq!(e.field, "L");
        let e = parse("manifold = \"circle\"\n[measure]\ntype = \"jittered\"\nn = 10\n").unwrap_err();
        assert_eq!(e.field, "seed");
        let e = parse("manifold = \"klein\"\n").unwrap_err();
        assert_eq!(e.field, "manifold");
        let e = parse("manifold = \"circle\"\np = [0.5]\n").unwrap_err();
        assert_eq!(e.field, "p");
        assert!(parse("manifold = \"circle\"\nbogus = 1\n").is_err());
    }
}
