//! Finite atomic measures in the plane and their scalar geometry.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{Square, SquareMass};
use crate::error::{Error, Result};
use crate::summation::{ksum, KahanSum};

/// A point of the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Euclidean distance, evaluated as `sqrt(dx² + dy²)` everywhere in the
    /// crate so that ball membership tests agree bit for bit.
    #[inline]
    pub fn dist(&self, other: &PlanarPoint) -> f64 {
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        (dx * dx + dy * dy).sqrt()
    }

    /// Lexicographic total order on (x, y).
    pub fn lex_cmp(&self, other: &PlanarPoint) -> std::cmp::Ordering {
        self.x.total_cmp(&other.x).then(self.y.total_cmp(&other.y))
    }

    pub fn scaled(&self, t: f64) -> PlanarPoint {
        PlanarPoint::new(self.x * t, self.y * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: PlanarPoint,
    pub weight: f64,
}

/// A finite sum of weighted point masses.
///
/// Atom order is part of the value: iteration and every reduction follow it.
/// Coincident atoms are kept as separate entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPlanarMeasure {
    atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl WeightedPlanarMeasure {
    /// Builds a measure, rejecting non-positive weights and non-finite data.
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        for (k, a) in atoms.iter().enumerate() {
            if !a.point.is_finite() {
                return Err(Error::BadSpec(format!("atom {k}: non-finite coordinate")));
            }
            if !(a.weight > 0.0) || !a.weight.is_finite() {
                return Err(Error::BadSpec(format!(
                    "atom {k}: weight must be positive and finite"
                )));
            }
        }
        Ok(Self { atoms, name: None })
    }

    pub fn empty() -> Self {
        Self {
            atoms: Vec::new(),
            name: None,
        }
    }

    pub fn from_pairs<I: IntoIterator<Item = ((f64, f64), f64)>>(pairs: I) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|((x, y), w)| Atom {
                    point: PlanarPoint::new(x, y),
                    weight: w,
                })
                .collect(),
        )
    }

    /// Equal weights `w` on every point.
    pub fn uniform(points: &[PlanarPoint], w: f64) -> Result<Self> {
        Self::new(
            points
                .iter()
                .map(|&p| Atom {
                    point: p,
                    weight: w,
                })
                .collect(),
        )
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn points(&self) -> Vec<PlanarPoint> {
        self.atoms.iter().map(|a| a.point).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.weight).collect()
    }

    pub fn point(&self, i: usize) -> PlanarPoint {
        self.atoms[i].point
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.atoms[i].weight
    }

    /// Same positions, new weights. Weights must stay positive.
    pub fn reweighted(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: weights.len(),
            });
        }
        let atoms = self
            .atoms
            .iter()
            .zip(weights)
            .map(|(a, &w)| Atom {
                point: a.point,
                weight: w,
            })
            .collect();
        let mut m = Self::new(atoms)?;
        m.name = self.name.clone();
        Ok(m)
    }

    /// Multiplies every weight by `s > 0`.
    pub fn scale_weights(&self, s: f64) -> Result<Self> {
        let w: Vec<f64> = self.atoms.iter().map(|a| a.weight * s).collect();
        self.reweighted(&w)
    }

    /// Applies `f` to every atom position, keeping weights and order.
    pub fn map_points<F: Fn(PlanarPoint) -> PlanarPoint>(&self, f: F) -> Result<Self> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                point: f(a.point),
                weight: a.weight,
            })
            .collect();
        let mut m = Self::new(atoms)?;
        m.name = self.name.clone();
        Ok(m)
    }

    /// Concatenation of the two atom lists.
    pub fn union(&self, other: &Self) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        Self { atoms, name: None }
    }

    /// Closed bounding box `(min, max)`, `None` when empty.
    pub fn bounding_box(&self) -> Option<(PlanarPoint, PlanarPoint)> {
        let first = self.atoms.first()?.point;
        let (mut lo, mut hi) = (first, first);
        for a in &self.atoms[1..] {
            lo.x = lo.x.min(a.point.x);
            lo.y = lo.y.min(a.point.y);
            hi.x = hi.x.max(a.point.x);
            hi.y = hi.y.max(a.point.y);
        }
        Some((lo, hi))
    }

    pub fn diameter(&self) -> f64 {
        let pts = self.points();
        let mut d: f64 = 0.0;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                d = d.max(pts[i].dist(&pts[j]));
            }
        }
        d
    }

    /// Smallest distance between atoms at different positions, `None` if
    /// the support is a single point.
    pub fn min_pairwise_distance(&self) -> Option<f64> {
        let pts = self.points();
        let best = (0..pts.len())
            .into_par_iter()
            .map(|i| {
                let mut d = f64::INFINITY;
                for q in &pts[i + 1..] {
                    let e = pts[i].dist(q);
                    if e > 0.0 && e < d {
                        d = e;
                    }
                }
                d
            })
            .reduce(|| f64::INFINITY, f64::min);
        best.is_finite().then_some(best)
    }

    /// Reads the `x,y,w` CSV format.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        if headers.len() != 3 || &headers[0] != "x" || &headers[1] != "y" || &headers[2] != "w" {
            return Err(Error::Parse {
                line: 1,
                message: "expected header `x,y,w`".into(),
            });
        }
        let mut atoms = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            if rec.len() != 3 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 3 fields, got {}", rec.len()),
                });
            }
            let mut vals = [0.0f64; 3];
            for (slot, field) in vals.iter_mut().zip(rec.iter()) {
                *slot = field.parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    message: format!("`{field}`: {e}"),
                })?;
            }
            let [x, y, w] = vals;
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: "non-finite coordinate".into(),
                });
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("weight {w} is not positive"),
                });
            }
            atoms.push(Atom {
                point: PlanarPoint::new(x, y),
                weight: w,
            });
        }
        Ok(Self { atoms, name: None })
    }

    pub fn read_csv_path(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::Parse {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    /// Writes the `x,y,w` CSV format with shortest round-trip decimals.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,w")?;
        for a in &self.atoms {
            writeln!(out, "{:?},{:?},{:?}", a.point.x, a.point.y, a.weight)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}

impl SquareMass for WeightedPlanarMeasure {
    fn square_mass(&self, sq: &Square) -> f64 {
        ksum(
            self.atoms
                .iter()
                .filter(|a| sq.contains(&a.point))
                .map(|a| a.weight),
        )
    }
}

/// Parses `x,y,w` CSV from any buffered reader line source.
pub fn parse_measure<R: BufRead>(reader: R) -> Result<WeightedPlanarMeasure> {
    WeightedPlanarMeasure::read_csv(reader)
}

/// μ(ℂ), summed in atom order.
pub fn total_mass(m: &WeightedPlanarMeasure) -> f64 {
    ksum(m.atoms.iter().map(|a| a.weight))
}

/// μ(B(center, r)) for the closed ball.
pub fn ball_mass(m: &WeightedPlanarMeasure, center: PlanarPoint, r: f64) -> f64 {
    ksum(
        m.atoms
            .iter()
            .filter(|a| center.dist(&a.point) <= r)
            .map(|a| a.weight),
    )
}

/// Supremum of μ(B(x,r))/r over atom centers and critical radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    /// `+∞` when the support is a single point (no scale above resolution).
    pub constant: f64,
    pub witness_center: PlanarPoint,
    pub witness_radius: f64,
    /// Smallest radius scanned.
    pub resolution: Option<f64>,
    /// Always true for atomic measures: μ(B(x,r))/r → ∞ as r → 0.
    pub atom_scale_divergence: bool,
    /// Bound for arbitrary (non-atom) centers with r ≥ resolution/2:
    /// B(x,r) ⊂ B(y,2r) for any atom y in the ball.
    pub arbitrary_center_bound: f64,
}

/// Growth constant above the measure's own resolution (its minimum
/// pairwise distance).
pub fn growth_constant(m: &WeightedPlanarMeasure) -> Result<GrowthReport> {
    if m.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    match m.min_pairwise_distance() {
        Some(h) => growth_constant_above(m, h),
        None => Ok(GrowthReport {
            constant: f64::INFINITY,
            witness_center: m.point(0),
            witness_radius: 0.0,
            resolution: None,
            atom_scale_divergence: true,
            arbitrary_center_bound: f64::INFINITY,
        }),
    }
}

/// Growth constant over radii `r >= resolution`.
///
/// For a fixed center the ratio is maximal at the left end of each interval
/// on which μ(B(x,r)) is constant, so scanning `r = resolution` and every
/// atom distance above it is exact.
pub fn growth_constant_above(m: &WeightedPlanarMeasure, resolution: f64) -> Result<GrowthReport> {
    if m.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    if !(resolution > 0.0) {
        return Err(Error::PreconditionViolated(
            "resolution must be positive".into(),
        ));
    }
    let pts = m.points();
    let ws = m.weights();
    let per_center: Vec<(f64, f64)> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(f64, f64)> = pts
                .iter()
                .zip(&ws)
                .map(|(p, &w)| (pts[i].dist(p), w))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut acc = KahanSum::new();
            let mut best = (0.0, resolution);
            let mut k = 0;
            // mass at r = resolution
            while k < d.len() && d[k].0 <= resolution {
                acc.add(d[k].1);
                k += 1;
            }
            best.0 = acc.value() / resolution;
            while k < d.len() {
                let r = d[k].0;
                while k < d.len() && d[k].0 == r {
                    acc.add(d[k].1);
                    k += 1;
                }
                let ratio = acc.value() / r;
                if ratio > best.0 {
                    best = (ratio, r);
                }
            }
            best
        })
        .collect();
    let mut best_i = 0;
    for (i, v) in per_center.iter().enumerate() {
        if v.0 > per_center[best_i].0 {
            best_i = i;
        }
    }
    let constant = per_center[best_i].0;
    Ok(GrowthReport {
        constant,
        witness_center: pts[best_i],
        witness_radius: per_center[best_i].1,
        resolution: Some(resolution),
        atom_scale_divergence: true,
        arbitrary_center_bound: 2.0 * constant,
    })
}

/// Average linear density μ(Q)/ℓ(Q).
pub fn theta<M: SquareMass + ?Sized>(m: &M, q: impl Into<Square>) -> Result<f64> {
    let q = q.into();
    if !(q.side > 0.0) {
        return Err(Error::ZeroSideLength);
    }
    Ok(m.square_mass(&q) / q.side)
}

/// ∫_{R_Q \ Q} 1/|y − x_Q| dμ(y), with R_Q the smallest square concentric
/// with `q` containing `r`.
pub fn delta(m: &WeightedPlanarMeasure, q: impl Into<Square>, r: impl Into<Square>) -> Result<f64> {
    let (q, r) = (q.into(), r.into());
    if !r.contains_square(&q) {
        return Err(Error::NotNested);
    }
    let rq = q.smallest_concentric_containing(&r);
    let c = q.center();
    Ok(ksum(
        m.atoms
            .iter()
            .filter(|a| rq.contains(&a.point) && !q.contains(&a.point))
            .map(|a| a.weight / c.dist(&a.point)),
    ))
}
