//! Energy potentials used to tilt the terminal distribution.
//!
//! The hypercube suite uses the orthant indicator and the coordinate-wise
//! hinge distance. The chirality potential penalizes tetrahedral stereo
//! centers whose signed volume disagrees with their declared handedness:
//! with the neighbor positions sorted by descending priority, a correctly
//! configured center has `sign * volume < 0` (`sign` is +1 for R, -1 for S),
//! so the ReLU of the signed quantity is zero exactly on correct geometry.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// Default magnitude threshold for the thresholded chirality error.
pub const CHIRALITY_THRESHOLD: f64 = 0.25;

/// `w * (1 - 1[x in [0, inf)^d])`: zero on the closed positive orthant,
/// `w` elsewhere.
pub fn indicator_potential(x: &[f64], w: f64) -> f64 {
    if x.iter().all(|&xi| xi >= 0.0) {
        0.0
    } else {
        w
    }
}

/// `w * sum_i max(0, -x_i)`: the L1 hinge distance to the positive orthant.
pub fn distance_potential(x: &[f64], w: f64) -> f64 {
    w * x.iter().map(|&xi| (-xi).max(0.0)).sum::<f64>()
}

/// Hinge distance applied to a single coordinate; used as a half-space tilt.
pub fn axis_distance_potential(x: &[f64], axis: usize, w: f64) -> f64 {
    w * (-x[axis]).max(0.0)
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Signed tetrahedron volume
/// `[(x2 - x1) x (x3 - x1)] . (x4 - x1) / 6`.
pub fn chiral_volume(x1: &[f64; 3], x2: &[f64; 3], x3: &[f64; 3], x4: &[f64; 3]) -> f64 {
    let e2 = sub(x2, x1);
    let e3 = sub(x3, x1);
    let e4 = sub(x4, x1);
    dot(&cross(&e2, &e3), &e4) / 6.0
}

/// Scale-invariant signed volume: the raw triple product divided by the
/// product of the three edge lengths from `x1` (no 1/6 factor).
pub fn normalized_chiral_volume(
    x1: &[f64; 3],
    x2: &[f64; 3],
    x3: &[f64; 3],
    x4: &[f64; 3],
) -> Result<f64> {
    let e2 = sub(x2, x1);
    let e3 = sub(x3, x1);
    let e4 = sub(x4, x1);
    let len_product = norm(&e2) * norm(&e3) * norm(&e4);
    if len_product == 0.0 {
        return Err(CoreError::DegenerateGeometry(
            "zero-length edge in normalized chiral volume".into(),
        ));
    }
    Ok(dot(&cross(&e2, &e3), &e4) / len_product)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Handedness {
    R,
    S,
}

impl Handedness {
    /// Sign applied to the volume: correct configurations satisfy
    /// `sign * V < 0`.
    pub fn sign(&self) -> f64 {
        match self {
            Handedness::R => 1.0,
            Handedness::S => -1.0,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "R" | "r" => Ok(Handedness::R),
            "S" | "s" => Ok(Handedness::S),
            other => Err(CoreError::Parse(format!("unknown handedness `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterSource {
    Reactant,
    Product,
}

impl CenterSource {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "reactant" => Ok(CenterSource::Reactant),
            "product" => Ok(CenterSource::Product),
            other => Err(CoreError::Parse(format!("unknown center source `{other}`"))),
        }
    }
}

/// One tetrahedral stereocenter: the four neighbor atom indices in
/// descending priority order, the handedness they should realize, and which
/// side of the reaction declared it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChiralCenter {
    pub id: u32,
    pub neighbors: [usize; 4],
    pub handedness: Handedness,
    pub source: CenterSource,
}

impl ChiralCenter {
    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            for j in (i + 1)..4 {
                if self.neighbors[i] == self.neighbors[j] {
                    return Err(CoreError::InvalidConfig(format!(
                        "chiral center {} repeats atom index {}",
                        self.id, self.neighbors[i]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Atom positions in 3-space; flattens to `R^{3n}` for flow-space interop.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub positions: Vec<[f64; 3]>,
}

impl Geometry {
    pub fn from_flat(x: &[f64]) -> Result<Self> {
        if x.len() % 3 != 0 {
            return Err(CoreError::DimensionMismatch {
                expected: (x.len() / 3 + 1) * 3,
                got: x.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(CoreError::DegenerateGeometry("non-finite coordinate".into()));
        }
        Ok(Self {
            positions: x.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.positions.iter().flatten().copied().collect()
    }

    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }

    fn atom(&self, index: usize) -> Result<&[f64; 3]> {
        self.positions.get(index).ok_or(CoreError::AtomIndexOutOfRange {
            index,
            n_atoms: self.positions.len(),
        })
    }

    fn center_volume(&self, c: &ChiralCenter) -> Result<f64> {
        Ok(chiral_volume(
            self.atom(c.neighbors[0])?,
            self.atom(c.neighbors[1])?,
            self.atom(c.neighbors[2])?,
            self.atom(c.neighbors[3])?,
        ))
    }

    fn center_normalized_volume(&self, c: &ChiralCenter) -> Result<f64> {
        normalized_chiral_volume(
            self.atom(c.neighbors[0])?,
            self.atom(c.neighbors[1])?,
            self.atom(c.neighbors[2])?,
            self.atom(c.neighbors[3])?,
        )
    }
}

/// `sum_c max(0, sign_c * V_c)`; zero exactly when every center has the
/// declared handedness. Centers listed for both reactant and product are
/// summed as given, without deduplication.
pub fn chirality_potential(geometry: &Geometry, centers: &[ChiralCenter]) -> Result<f64> {
    let mut total = 0.0;
    for c in centers {
        let v = geometry.center_volume(c)?;
        total += (c.handedness.sign() * v).max(0.0);
    }
    Ok(total)
}

/// True when any reaction-consistent center's signed volume contradicts its
/// declared handedness. The caller passes only the consistent centers.
pub fn consistent_chirality_error(geometry: &Geometry, centers: &[ChiralCenter]) -> Result<bool> {
    for c in centers {
        if c.handedness.sign() * geometry.center_volume(c)? > 0.0 {
            return Ok(true);
        }
    }
    Ok(false)
}

/// True when some center has a wrong-sign normalized volume with magnitude
/// above `theta`.
pub fn thresholded_chirality_error(
    geometry: &Geometry,
    centers: &[ChiralCenter],
    theta: f64,
) -> Result<bool> {
    if theta <= 0.0 {
        return Err(CoreError::InvalidConfig("theta must be positive".into()));
    }
    for c in centers {
        let v = geometry.center_normalized_volume(c)?;
        if c.handedness.sign() * v > 0.0 && v.abs() > theta {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Potential specification usable by the steering drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Indicator { weight: f64 },
    Distance { weight: f64 },
    AxisDistance { axis: usize, weight: f64 },
    Chirality { centers: Vec<ChiralCenter> },
}

impl Potential {
    pub fn validate(&self) -> Result<()> {
        match self {
            Potential::Indicator { weight } | Potential::Distance { weight } => {
                if *weight <= 0.0 {
                    return Err(CoreError::InvalidConfig("potential weight must be > 0".into()));
                }
            }
            Potential::AxisDistance { weight, .. } => {
                if *weight <= 0.0 {
                    return Err(CoreError::InvalidConfig("potential weight must be > 0".into()));
                }
            }
            Potential::Chirality { centers } => {
                for c in centers {
                    c.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        match self {
            Potential::Indicator { weight } => Ok(indicator_potential(x, *weight)),
            Potential::Distance { weight } => Ok(distance_potential(x, *weight)),
            Potential::AxisDistance { axis, weight } => {
                if *axis >= x.len() {
                    return Err(CoreError::DimensionMismatch {
                        expected: axis + 1,
                        got: x.len(),
                    });
                }
                Ok(axis_distance_potential(x, *axis, *weight))
            }
            Potential::Chirality { centers } => {
                chirality_potential(&Geometry::from_flat(x)?, centers)
            }
        }
    }
}

/// Parse chiral centers from CSV rows
/// `center_id,i1,i2,i3,i4,handedness,source`.
pub fn parse_chiral_centers_csv(text: &str) -> Result<Vec<ChiralCenter>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(CoreError::Parse(format!(
                "chiral center line {}: expected 7 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let parse_idx = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| CoreError::Parse(format!("bad atom index `{s}`")))
        };
        let center = ChiralCenter {
            id: fields[0]
                .parse()
                .map_err(|_| CoreError::Parse(format!("bad center id `{}`", fields[0])))?,
            neighbors: [
                parse_idx(fields[1])?,
                parse_idx(fields[2])?,
                parse_idx(fields[3])?,
                parse_idx(fields[4])?,
            ],
            handedness: Handedness::parse(fields[5])?,
            source: CenterSource::parse(fields[6])?,
        };
        center.validate()?;
        out.push(center);
    }
    Ok(out)
}

/// Parse a geometry from CSV rows `atom_index,x,y,z`. Indices must cover
/// `0..n` exactly once.
pub fn parse_geometry_csv(text: &str) -> Result<Geometry> {
    let mut rows: Vec<(usize, [f64; 3])> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(CoreError::Parse(format!(
                "geometry line {}: expected 4 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let idx: usize = fields[0]
            .parse()
            .map_err(|_| CoreError::Parse(format!("bad atom index `{}`", fields[0])))?;
        let mut pos = [0.0; 3];
        for (k, f) in fields[1..].iter().enumerate() {
            pos[k] = f
                .parse()
                .map_err(|_| CoreError::Parse(format!("bad coordinate `{f}`")))?;
        }
        rows.push((idx, pos));
    }
    rows.sort_by_key(|r| r.0);
    for (expect, (idx, _)) in rows.iter().enumerate() {
        if *idx != expect {
            return Err(CoreError::Parse(format!(
                "atom indices must cover 0..n exactly once (saw {idx}, wanted {expect})"
            )));
        }
    }
    Ok(Geometry {
        positions: rows.into_iter().map(|r| r.1).collect(),
    })
}
