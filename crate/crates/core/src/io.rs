//! Text and JSON formats for point sets, measures and polynomials.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, MzError, Result};
use crate::manifolds::{ManifoldKind, Point, SpectralBasis};
use crate::measures::{SignedMeasure, WeightFunction};
use crate::pointsets::PointSet;
use crate::polynomials::DiffusionPolynomial;

fn parse_kind(v: &str, line: usize) -> Result<ManifoldKind> {
    ManifoldKind::parse(v).ok_or_else(|| MzError::Parse {
        line,
        message: format!("unknown manifold {v:?}"),
    })
}

/// `manifold: <kind>` header, then one point per line.
pub fn write_pointset(set: &PointSet) -> String {
    let mut s = format!("manifold: {}\n", set.kind);
    for p in &set.points {
        let c: Vec<String> = p.coords().iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{}", c.join(" "));
    }
    s
}

pub fn read_pointset(text: &str) -> Result<PointSet> {
    let mut kind = None;
    let mut pts = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(v) = line.strip_prefix("manifold:") {
            kind = Some(parse_kind(v, i + 1)?);
            continue;
        }
        let k = kind.ok_or(MzError::Parse {
            line: i + 1,
            message: "point before manifold header".into(),
        })?;
        let nums = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| MzError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        pts.push(Point::from_coords(k, &nums).map_err(|e| MzError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    let kind = kind.ok_or_else(|| invalid("pointset", "missing manifold header"))?;
    PointSet::new(kind, pts)
}

/// On-disk measure description. Atoms and centers are coordinate lists,
/// atoms carry their weight as the last entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MeasureFile {
    Atomic {
        manifold: String,
        atoms: Vec<Vec<f64>>,
    },
    Density {
        manifold: String,
        weight: WeightFunction,
    },
    BallAverage {
        manifold: String,
        centers: Vec<Vec<f64>>,
        radii: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl MeasureFile {
    pub fn from_measure(nu: &SignedMeasure) -> Self {
        let manifold = nu.kind().to_string();
        match nu {
            SignedMeasure::Atomic { atoms, .. } => MeasureFile::Atomic {
                manifold,
                atoms: atoms
                    .iter()
                    .map(|(p, w)| {
                        let mut c = p.coords();
                        c.push(*w);
                        c
                    })
                    .collect(),
            },
            SignedMeasure::Density { weight, .. } => MeasureFile::Density {
                manifold,
                weight: weight.clone(),
            },
            SignedMeasure::BallAverage { centers, radii, weights, .. } => MeasureFile::BallAverage {
                manifold,
                centers: centers.iter().map(|p| p.coords()).collect(),
                radii: radii.clone(),
                weights: weights.clone(),
            },
        }
    }

    pub fn to_measure(&self) -> Result<SignedMeasure> {
        let kind_of = |m: &str| ManifoldKind::parse(m).ok_or_else(|| invalid("manifold", format!("unknown manifold {m:?}")));
        match self {
            MeasureFile::Atomic { manifold, atoms } => {
                let k = kind_of(manifold)?;
                let n = k.coord_count();
                let atoms = atoms
                    .iter()
                    .map(|a| {
                        if a.len() != n + 1 {
                            return Err(invalid("atoms", format!("expected {} numbers per atom, found {}", n + 1, a.len())));
                        }
                        if !a[n].is_finite() {
                            return Err(invalid("atoms", "weights must be finite"));
                        }
                        Ok((Point::from_coords(k, &a[..n])?, a[n]))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(SignedMeasure::atomic(k, atoms))
            }
            MeasureFile::Density { manifold, weight } => {
                weight.validate()?;
                Ok(SignedMeasure::Density {
                    kind: kind_of(manifold)?,
                    weight: weight.clone(),
                })
            }
            MeasureFile::BallAverage { manifold, centers, radii, weights } => {
                let k = kind_of(manifold)?;
                let c = centers.iter().map(|c| Point::from_coords(k, c)).collect::<Result<Vec<_>>>()?;
                SignedMeasure::ball_average(k, c, radii.clone(), weights.clone())
            }
        }
    }
}

pub fn measure_to_json(nu: &SignedMeasure) -> String {
    serde_json::to_string_pretty(&MeasureFile::from_measure(nu)).expect("measure serializes")
}

pub fn measure_from_json(s: &str) -> Result<SignedMeasure> {
    let f: MeasureFile = serde_json::from_str(s).map_err(|e| MzError::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    f.to_measure()
}

/// Loads a [`DiffusionPolynomial::dump`] against `basis`.
pub fn read_polynomial(text: &str, basis: Arc<SpectralBasis>) -> Result<DiffusionPolynomial> {
    let mut level = None;
    let mut coeffs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let perr = |message: String| MzError::Parse { line: i + 1, message };
        if let Some(v) = line.strip_prefix("basis:") {
            let k = parse_kind(v, i + 1)?;
            if k != basis.kind {
                return Err(MzError::ManifoldMismatch {
                    expected: basis.kind.to_string(),
                    found: k.to_string(),
                });
            }
        } else if let Some(v) = line.strip_prefix("level:") {
            level = Some(v.trim().parse::<f64>().map_err(|e| perr(e.to_string()))?);
        } else {
            coeffs.push(line.parse::<f64>().map_err(|e| perr(e.to_string()))?);
        }
    }
    let level = level.ok_or_else(|| invalid("polynomial", "missing level header"))?;
    DiffusionPolynomial::new(basis, level, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::{eigen_system, Manifold};
    use crate::polynomials::random_polynomial;

    #[test]
    fn pointset_roundtrip() {
        let set = PointSet::new(ManifoldKind::Sphere2, vec![Point::sphere(0.3, 1.0), Point::sphere(2.0, 5.5)]).unwrap();
        let back = read_pointset(&format!("# two points\n{}", write_pointset(&set))).unwrap();
        assert_eq!(back, set);
        assert!(matches!(read_pointset("manifold: circle\n0.1 0.2\n"), Err(MzError::Parse { line: 2, .. })));
        assert!(matches!(read_pointset("0.1\n"), Err(MzError::Parse { line: 1, .. })));
    }

    #[test]
    fn measure_json() {
        let nu = measure_from_json(r#"{"type":"atomic","manifold":"circle","atoms":[[0.5,0.25],[1.5,0.75]]}"#).unwrap();
        assert_eq!(nu, SignedMeasure::atomic(ManifoldKind::Circle, vec![(Point::circle(0.5), 0.25), (Point::circle(1.5), 0.75)]));
        assert_eq!(measure_from_json(&measure_to_json(&nu)).unwrap(), nu);
        let d = measure_from_json(r#"{"type":"density","manifold":"sphere2","weight":{"name":"sin_abs"}}"#).unwrap();
        assert_eq!(measure_from_json(&measure_to_json(&d)).unwrap(), d);
        assert!(measure_from_json(r#"{"type":"atomic","manifold":"circle","atoms":[[0.5]]}"#).is_err());
        assert!(measure_from_json(r#"{"type":"atomic","manifold":"klein","atoms":[]}"#).is_err());
    }

    #[test]
    fn polynomial_dump_roundtrip() {
        let b = Arc::new(eigen_system(&Manifold::torus(), 5.0).unwrap());
        let p = random_polynomial(b.clone(), 5.0, 4).unwrap();
        assert_eq!(read_polynomial(&p.dump(), b).unwrap(), p);
    }
}
