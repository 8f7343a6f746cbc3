//! Planar maps with known bilipschitz bounds, image measures `φ♯μ`, and the
//! transport experiments built on them.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{estimate_gamma, CapacityParams};
use crate::curvature::{c2_monte_carlo, c2_total, operator_norm_estimate};
use crate::dyadic::Square;
use crate::error::{Error, Result};
use crate::generators::{check_breakpoints, parse_breakpoints, piecewise_linear};
use crate::measure::{total_mass, PlanarPoint, WeightedPlanarMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapKind {
    /// `z ↦ Mz + t`, `M` row major.
    Affine {
        matrix: [f64; 4],
        translation: [f64; 2],
    },
    /// `(x, y) ↦ (x, λy)`.
    Shear { lambda: f64 },
    /// `(x, y) ↦ (x, y + A(x))` with `A` piecewise linear.
    GraphShift { breakpoints: Vec<(f64, f64)> },
    /// `z ↦ z` for `Re z ≥ 0`, `z + i` otherwise.
    SplitTranslate,
    /// Applied first to last.
    Composition { maps: Vec<BilipschitzMapSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilipschitzMapSpec {
    #[serde(flatten)]
    pub kind: MapKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_l: Option<f64>,
}

/// Singular values `(s₁, s₂)`, `s₁ ≥ s₂`, of the row-major 2×2 matrix.
pub fn singular_values(m: [f64; 4]) -> (f64, f64) {
    let [a, b, c, d] = m;
    let fro = a * a + b * b + c * c + d * d;
    let det = (a * d - b * c).abs();
    let disc = ((fro - 2.0 * det) * (fro + 2.0 * det)).max(0.0).sqrt();
    let s1 = ((fro + disc) / 2.0).sqrt();
    let s2 = if s1 > 0.0 { det / s1 } else { 0.0 };
    (s1, s2)
}

/// Largest slope magnitude of a piecewise-linear function.
pub fn slope_bound(breakpoints: &[(f64, f64)]) -> f64 {
    breakpoints
        .windows(2)
        .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
        .fold(0.0, f64::max)
}

impl BilipschitzMapSpec {
    pub fn new(kind: MapKind) -> Self {
        Self {
            kind,
            declared_l: None,
        }
    }

    pub fn identity() -> Self {
        Self::affine([1.0, 0.0, 0.0, 1.0], [0.0, 0.0])
    }

    pub fn affine(matrix: [f64; 4], translation: [f64; 2]) -> Self {
        Self::new(MapKind::Affine {
            matrix,
            translation,
        })
    }

    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::affine([c, -s, s, c], [0.0, 0.0])
    }

    pub fn dilation(t: f64) -> Self {
        Self::affine([t, 0.0, 0.0, t], [0.0, 0.0])
    }

    pub fn shear(lambda: f64) -> Self {
        Self::new(MapKind::Shear { lambda })
    }

    pub fn graph_shift(breakpoints: Vec<(f64, f64)>) -> Self {
        Self::new(MapKind::GraphShift { breakpoints })
    }

    pub fn split_translate() -> Self {
        Self::new(MapKind::SplitTranslate)
    }

    pub fn compose(maps: Vec<BilipschitzMapSpec>) -> Self {
        Self::new(MapKind::Composition { maps })
    }

    pub fn with_declared_l(mut self, l: f64) -> Self {
        self.declared_l = Some(l);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            MapKind::Affine {
                matrix,
                translation,
            } => {
                if matrix.iter().chain(translation).any(|v| !v.is_finite()) {
                    return Err(Error::BadSpec("affine entries must be finite".into()));
                }
            }
            MapKind::Shear { lambda } => {
                if !(*lambda > 0.0) || !lambda.is_finite() {
                    return Err(Error::BadSpec("shear needs λ > 0".into()));
                }
            }
            MapKind::GraphShift { breakpoints } => check_breakpoints(breakpoints)?,
            MapKind::SplitTranslate => {}
            MapKind::Composition { maps } => {
                if maps.is_empty() {
                    return Err(Error::BadSpec("empty composition".into()));
                }
                for m in maps {
                    m.validate()?;
                }
            }
        }
        if let Some(l) = self.declared_l {
            match self.lipschitz_bound() {
                None => {
                    return Err(Error::BadSpec(
                        "declared L given for a map that is not bilipschitz".into(),
                    ))
                }
                Some(known) if l < known * (1.0 - 1e-12) => {
                    return Err(Error::BadSpec(format!(
                        "declared L = {l} is below the bound {known}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Smallest `L` with `L⁻¹|z−w| ≤ |φ(z)−φ(w)| ≤ L|z−w|` that the map
    /// description guarantees; `None` when the map is not bilipschitz.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        match &self.kind {
            MapKind::Affine { matrix, .. } => {
                let (s1, s2) = singular_values(*matrix);
                (s2 > 0.0).then(|| s1.max(1.0 / s2))
            }
            MapKind::Shear { lambda } => Some(lambda.max(1.0 / lambda)),
            MapKind::GraphShift { breakpoints } => {
                let s = slope_bound(breakpoints);
                Some(((s * s + 4.0).sqrt() + s) / 2.0)
            }
            MapKind::SplitTranslate => None,
            MapKind::Composition { maps } => maps
                .iter()
                .map(|m| m.lipschitz_bound())
                .try_fold(1.0, |acc, l| l.map(|l| acc * l)),
        }
    }

    pub fn is_bilipschitz(&self) -> bool {
        self.lipschitz_bound().is_some()
    }

    /// Declared constant if present, otherwise the computed bound.
    pub fn effective_l(&self) -> Option<f64> {
        self.declared_l.or_else(|| self.lipschitz_bound())
    }

    pub fn is_affine(&self) -> bool {
        match &self.kind {
            MapKind::Affine { .. } | MapKind::Shear { .. } => true,
            MapKind::Composition { maps } => maps.iter().all(|m| m.is_affine()),
            _ => false,
        }
    }

    pub fn apply(&self, p: PlanarPoint) -> Result<PlanarPoint> {
        let q = match &self.kind {
            MapKind::Affine {
                matrix: [a, b, c, d],
                translation: [tx, ty],
            } => PlanarPoint::new(a * p.x + b * p.y + tx, c * p.x + d * p.y + ty),
            MapKind::Shear { lambda } => PlanarPoint::new(p.x, lambda * p.y),
            MapKind::GraphShift { breakpoints } => {
                PlanarPoint::new(p.x, p.y + piecewise_linear(breakpoints, p.x))
            }
            MapKind::SplitTranslate => {
                if p.x >= 0.0 {
                    p
                } else {
                    PlanarPoint::new(p.x, p.y + 1.0)
                }
            }
            MapKind::Composition { maps } => {
                let mut q = p;
                for (k, m) in maps.iter().enumerate() {
                    q = m.apply(q).map_err(|e| {
                        Error::MapUndefined(format!("stage {k} of composition: {e}"))
                    })?;
                }
                q
            }
        };
        if !q.is_finite() {
            return Err(Error::MapUndefined(format!(
                "image of ({}, {}) is not finite",
                p.x, p.y
            )));
        }
        Ok(q)
    }

    pub fn label(&self) -> String {
        match &self.kind {
            MapKind::Affine {
                matrix: [a, b, c, d],
                translation: [tx, ty],
            } => {
                format!("affine:{a},{b},{c},{d},{tx},{ty}")
            }
            MapKind::Shear { lambda } => format!("shear:{lambda}"),
            MapKind::GraphShift { breakpoints } => format!(
                "graph:{}",
                breakpoints
                    .iter()
                    .map(|(x, y)| format!("{x},{y}"))
                    .collect::<Vec<_>>()
                    .join(";")
            ),
            MapKind::SplitTranslate => "split".into(),
            MapKind::Composition { maps } => format!(
                "compose:{}",
                maps.iter().map(|m| m.label()).collect::<Vec<_>>().join("|")
            ),
        }
    }
}

impl FromStr for BilipschitzMapSpec {
    type Err = Error;

    /// `affine:a,b,c,d,tx,ty`, `shear:λ`, `graph:x0,y0;x1,y1;...`, `split`,
    /// `compose:m1|m2|...`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::BadSpec(format!("not a number: {t:?}")))
        };
        let spec = match kind {
            "affine" => {
                let v = rest.split(',').map(num).collect::<Result<Vec<f64>>>()?;
                if v.len() != 6 {
                    return Err(Error::BadSpec("affine needs a,b,c,d,tx,ty".into()));
                }
                Self::affine([v[0], v[1], v[2], v[3]], [v[4], v[5]])
            }
            "shear" => Self::shear(num(rest)?),
            "graph" => Self::graph_shift(parse_breakpoints(rest)?),
            "split" if rest.is_empty() => Self::split_translate(),
            "compose" => Self::compose(
                rest.split('|')
                    .map(str::parse)
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => return Err(Error::BadSpec(format!("unknown map {s:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// `φ♯μ`: atoms moved, weights and order kept.
pub fn pushforward(
    map: &BilipschitzMapSpec,
    m: &WeightedPlanarMeasure,
) -> Result<WeightedPlanarMeasure> {
    let pts = m
        .atoms()
        .par_iter()
        .map(|a| map.apply(a.point))
        .collect::<Result<Vec<_>>>()?;
    let mut out = WeightedPlanarMeasure::from_pairs(
        pts.iter().zip(m.weights()).map(|(p, w)| ((p.x, p.y), w)),
    )?;
    out.name = m.name.clone();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalBilip {
    pub lower: f64,
    pub upper: f64,
    pub pairs: u64,
}

/// Extreme distortion `|φ(z)−φ(w)|/|z−w|` over `pairs` seeded pairs of
/// distinct atoms, or over all pairs when there are no more than `pairs`.
pub fn empirical_bilip(
    map: &BilipschitzMapSpec,
    m: &WeightedPlanarMeasure,
    pairs: u64,
    seed: u64,
) -> Result<EmpiricalBilip> {
    let pts = m.points();
    let n = pts.len();
    let images = pts
        .iter()
        .map(|&p| map.apply(p))
        .collect::<Result<Vec<_>>>()?;
    let ratio = |i: usize, j: usize| {
        let d = pts[i].dist(&pts[j]);
        (d > 0.0).then(|| images[i].dist(&images[j]) / d)
    };
    let mut seen = Vec::new();
    let total = (n as u64) * (n.saturating_sub(1) as u64) / 2;
    if total <= pairs {
        for i in 0..n {
            seen.extend((i + 1..n).filter_map(|j| ratio(i, j)));
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut attempts = 0u64;
        while (seen.len() as u64) < pairs && attempts < pairs.saturating_mul(20) {
            attempts += 1;
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                seen.extend(ratio(i, j));
            }
        }
    }
    if seen.is_empty() {
        return Err(Error::TooFewAtoms);
    }
    let lower = seen.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = seen.iter().copied().fold(0.0, f64::max);
    let count = seen.len() as u64;
    Ok(EmpiricalBilip {
        lower,
        upper,
        pairs: count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransportParams {
    pub exact_cutoff: usize,
    pub mc_samples: u64,
    pub bilip_pairs: u64,
    pub seed: u64,
}

impl Default for TransportParams {
    fn default() -> Self {
        Self {
            exact_cutoff: 400,
            mc_samples: 1_000_000,
            bilip_pairs: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportReport {
    pub map: String,
    pub c2_before: f64,
    pub c2_after: f64,
    pub mass: f64,
    /// `c²(φ♯μ)/(μ(E)+c²(μ))`, 0 for the zero measure.
    pub ratio_teocurv: f64,
    /// `None` with fewer than two distinct atoms.
    pub empirical_l: Option<(f64, f64)>,
    pub declared_l: Option<f64>,
    pub not_bilipschitz: bool,
    /// c² sampled rather than summed.
    pub sampled: bool,
}

fn c2_with(m: &WeightedPlanarMeasure, p: &TransportParams) -> Result<(f64, bool)> {
    if m.len() <= p.exact_cutoff {
        Ok((c2_total(m, 0.0).value, false))
    } else {
        Ok((c2_monte_carlo(m, 0.0, p.mc_samples, p.seed)?.value, true))
    }
}

pub fn teocurv_experiment(
    map: &BilipschitzMapSpec,
    m: &WeightedPlanarMeasure,
    params: &TransportParams,
) -> Result<TransportReport> {
    let image = pushforward(map, m)?;
    let (c2_before, s1) = c2_with(m, params)?;
    let (c2_after, s2) = c2_with(&image, params)?;
    let mass = total_mass(m);
    let denom = mass + c2_before;
    let empirical_l = match empirical_bilip(map, m, params.bilip_pairs, params.seed) {
        Ok(e) => Some((e.lower, e.upper)),
        Err(Error::TooFewAtoms) => None,
        Err(e) => return Err(e),
    };
    Ok(TransportReport {
        map: map.label(),
        c2_before,
        c2_after,
        mass,
        ratio_teocurv: if denom > 0.0 { c2_after / denom } else { 0.0 },
        empirical_l,
        declared_l: map.effective_l(),
        not_bilipschitz: !map.is_bilipschitz(),
        sampled: s1 || s2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRatio {
    pub map: String,
    pub gamma_est_before: f64,
    pub gamma_est_after: f64,
    /// `None` when the estimate before is 0.
    pub ratio: Option<f64>,
    pub not_bilipschitz: bool,
}

/// Capacity estimates of the support before and after the map.
pub fn capacity_ratio_experiment(
    map: &BilipschitzMapSpec,
    m: &WeightedPlanarMeasure,
    params: &CapacityParams,
) -> Result<CapacityRatio> {
    let before = estimate_gamma(&m.points(), params)?.value;
    let after = estimate_gamma(&pushforward(map, m)?.points(), params)?.value;
    Ok(CapacityRatio {
        map: map.label(),
        gamma_est_before: before,
        gamma_est_after: after,
        ratio: (before > 0.0).then(|| after / before),
        not_bilipschitz: !map.is_bilipschitz(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorNormRatio {
    pub map: String,
    pub before: f64,
    pub after: f64,
    pub ratio: f64,
}

/// `‖C_ε‖` on `L²(μ)` against `‖C_ε‖` on `L²(φ♯μ)`, same `ε`.
pub fn operator_norm_transfer(
    map: &BilipschitzMapSpec,
    m: &WeightedPlanarMeasure,
    eps: f64,
    iterations: usize,
    seed: u64,
) -> Result<OperatorNormRatio> {
    let before = operator_norm_estimate(m, eps, iterations, seed)?.value;
    let after = operator_norm_estimate(&pushforward(map, m)?, eps, iterations, seed)?.value;
    if !(before > 0.0) {
        return Err(Error::PreconditionViolated(
            "operator norm before the map is 0".into(),
        ));
    }
    Ok(OperatorNormRatio {
        map: map.label(),
        before,
        after,
        ratio: after / before,
    })
}

/// Samples per side of the boundary when the image diameter is not exact.
pub const BOUNDARY_SAMPLES: usize = 64;

/// `diam φ(Q)`: exact from the corners for affine maps, otherwise the
/// diameter of sampled boundary images.
pub fn image_diameter(map: &BilipschitzMapSpec, q: &Square) -> Result<f64> {
    let corners = [
        PlanarPoint::new(q.x0, q.y0),
        PlanarPoint::new(q.x1(), q.y0),
        PlanarPoint::new(q.x1(), q.y1()),
        PlanarPoint::new(q.x0, q.y1()),
    ];
    let k = if map.is_affine() { 1 } else { BOUNDARY_SAMPLES };
    let mut pts = Vec::with_capacity(4 * k);
    for s in 0..4 {
        let (a, b) = (corners[s], corners[(s + 1) % 4]);
        for t in 0..k {
            let u = t as f64 / k as f64;
            pts.push(map.apply(PlanarPoint::new(
                a.x + u * (b.x - a.x),
                a.y + u * (b.y - a.y),
            ))?);
        }
    }
    let mut d = 0.0f64;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d = d.max(pts[i].dist(&pts[j]));
        }
    }
    Ok(d)
}

/// `θ_σ(φ(Q)) = √2 σ(φ(Q))/diam φ(Q)` with `σ = φ♯μ`, so `σ(φ(Q)) = μ(Q)`.
pub fn theta_sigma(map: &BilipschitzMapSpec, m: &WeightedPlanarMeasure, q: &Square) -> Result<f64> {
    if !(q.side > 0.0) {
        return Err(Error::ZeroSideLength);
    }
    let d = image_diameter(map, q)?;
    if !(d > 0.0) {
        return Err(Error::MapUndefined(
            "image of the square has zero diameter".into(),
        ));
    }
    let mass = crate::summation::ksum(
        m.atoms()
            .iter()
            .filter(|a| q.contains(&a.point))
            .map(|a| a.weight),
    );
    Ok(std::f64::consts::SQRT_2 * mass / d)
}
