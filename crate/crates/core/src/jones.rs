//! Jones β-numbers over the dyadic grid, the square-sum criterion and
//! arc-length regularity of polylines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicSquare, Square};
use crate::error::{Error, Result};
use crate::geometry::min_width_strip;
use crate::measure::{PlanarPoint, WeightedPlanarMeasure};
use crate::quadtree::QuadTree;
use crate::summation::{ksum, KahanSum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PlanarPoint>", into = "Vec<PlanarPoint>")]
pub struct Polyline {
    vertices: Vec<PlanarPoint>,
    /// Arc length at each vertex.
    arc: Vec<f64>,
}

impl TryFrom<Vec<PlanarPoint>> for Polyline {
    type Error = Error;

    fn try_from(v: Vec<PlanarPoint>) -> Result<Self> {
        Polyline::new(v)
    }
}

impl From<Polyline> for Vec<PlanarPoint> {
    fn from(p: Polyline) -> Self {
        p.vertices
    }
}

impl Polyline {
    pub fn new(vertices: Vec<PlanarPoint>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::DegenerateCurve(
                "a polyline needs at least two vertices".into(),
            ));
        }
        if let Some(k) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateCurve(format!("vertex {k} is not finite")));
        }
        if let Some(k) = vertices.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::DegenerateCurve(format!(
                "vertices {k} and {} coincide",
                k + 1
            )));
        }
        let mut arc = Vec::with_capacity(vertices.len());
        let mut s = KahanSum::new();
        arc.push(0.0);
        for w in vertices.windows(2) {
            s.add(w[0].dist(&w[1]));
            arc.push(s.value());
        }
        if !(s.value() > 0.0) {
            return Err(Error::DegenerateCurve("zero length".into()));
        }
        Ok(Self { vertices, arc })
    }

    pub fn vertices(&self) -> &[PlanarPoint] {
        &self.vertices
    }

    pub fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    pub fn segment_count(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn segment(&self, k: usize) -> (PlanarPoint, PlanarPoint) {
        (self.vertices[k], self.vertices[k + 1])
    }

    /// Arc-length offset of vertex `k`.
    pub fn arc_at(&self, k: usize) -> f64 {
        self.arc[k]
    }

    /// Point at arc length `s`, clamped to the curve.
    pub fn point_at(&self, s: f64) -> PlanarPoint {
        let s = s.clamp(0.0, self.length());
        let k = match self.arc.binary_search_by(|a| a.total_cmp(&s)) {
            Ok(k) => return self.vertices[k],
            Err(k) => k - 1,
        };
        let (a, b) = self.segment(k);
        let t = (s - self.arc[k]) / (self.arc[k + 1] - self.arc[k]);
        PlanarPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
    }

    /// Arc-length intervals of the curve inside the closed square, merged
    /// and ascending.
    pub fn clip_to_square(&self, q: &Square) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for k in 0..self.segment_count() {
            let (a, b) = self.segment(k);
            if let Some((t0, t1)) = liang_barsky(a, b, q) {
                let len = self.arc[k + 1] - self.arc[k];
                let (s0, s1) = (self.arc[k] + t0 * len, self.arc[k] + t1 * len);
                match out.last_mut() {
                    Some(last) if s0 <= last.1 => last.1 = last.1.max(s1),
                    _ => out.push((s0, s1)),
                }
            }
        }
        out
    }

    /// H¹(Γ ∩ B̄(c, r)), summed segment by segment.
    pub fn length_in_ball(&self, c: &PlanarPoint, r: f64) -> f64 {
        ksum((0..self.segment_count()).map(|k| {
            let (a, b) = self.segment(k);
            segment_in_ball(a, b, c, r)
        }))
    }
}

/// Parameter range `[t0, t1] ⊂ [0, 1]` of `a + t(b-a)` inside the closed
/// square.
fn liang_barsky(a: PlanarPoint, b: PlanarPoint, q: &Square) -> Option<(f64, f64)> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for (p, d) in [
        (-dx, a.x - q.x0),
        (dx, q.x1() - a.x),
        (-dy, a.y - q.y0),
        (dy, q.y1() - a.y),
    ] {
        if p == 0.0 {
            if d < 0.0 {
                return None;
            }
            continue;
        }
        let t = d / p;
        if p < 0.0 {
            t0 = t0.max(t);
        } else {
            t1 = t1.min(t);
        }
        if t0 > t1 {
            return None;
        }
    }
    (t1 > t0).then_some((t0, t1))
}

fn segment_in_ball(a: PlanarPoint, b: PlanarPoint, c: &PlanarPoint, r: f64) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let (fx, fy) = (a.x - c.x, a.y - c.y);
    let aa = dx * dx + dy * dy;
    let bb = fx * dx + fy * dy;
    let cc = fx * fx + fy * fy - r * r;
    let disc = bb * bb - aa * cc;
    if disc <= 0.0 {
        return 0.0;
    }
    let sq = disc.sqrt();
    let t0 = ((-bb - sq) / aa).max(0.0);
    let t1 = ((-bb + sq) / aa).min(1.0);
    if t1 <= t0 {
        return 0.0;
    }
    (t1 - t0) * aa.sqrt()
}

/// Distance from `c` to the closed segment `ab`.
fn segment_distance(a: PlanarPoint, b: PlanarPoint, c: &PlanarPoint) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let t = (((c.x - a.x) * dx + (c.y - a.y) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    c.dist(&PlanarPoint::new(a.x + t * dx, a.y + t * dy))
}

fn three_q(q: &DyadicSquare) -> Square {
    q.square().scale(3.0)
}

/// w(K∩3Q)/ℓ(Q); zero for at most two points.
pub fn beta(k: &[PlanarPoint], q: &DyadicSquare) -> f64 {
    let s = three_q(q);
    let inside: Vec<PlanarPoint> = k.iter().copied().filter(|p| s.contains(p)).collect();
    beta_of(&inside, q.side())
}

fn beta_of(inside: &[PlanarPoint], side: f64) -> f64 {
    if inside.len() <= 2 {
        return 0.0;
    }
    min_width_strip(inside).width() / side
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEntry {
    pub square: DyadicSquare,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: i32,
    pub count: usize,
    pub max_beta: f64,
    pub sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaProfile {
    pub entries: Vec<BetaEntry>,
    /// Σ β(P)²ℓ(P).
    pub criterion_sum: f64,
    /// criterion_sum / ℓ(Q).
    pub normalized: f64,
    pub resolution_level: i32,
    pub levels: Vec<LevelStats>,
}

impl BetaProfile {
    /// `level,count,max_beta,sum` rows.
    pub fn to_level_csv(&self) -> String {
        let mut s = String::from("level,count,max_beta,sum\n");
        for l in &self.levels {
            s.push_str(&format!(
                "{},{},{:?},{:?}\n",
                l.level, l.count, l.max_beta, l.sum
            ));
        }
        s
    }
}

/// Σ β_K(P)²ℓ(P) over dyadic `P ⊂ q` down to `max_depth`, skipping `P`
/// with `3P ∩ K = ∅` (and hence all of their descendants).
///
/// A 4-dyadic `q` is treated as its sixteen cells.
pub fn beta_criterion(k: &[PlanarPoint], q: &DyadicSquare, max_depth: i32) -> Result<BetaProfile> {
    if max_depth < q.level {
        return Err(Error::PreconditionViolated(format!(
            "max_depth {max_depth} is above the level {} of the square",
            q.level
        )));
    }
    let mut frontier: Vec<DyadicSquare> = if q.four_dyadic {
        (0..4)
            .flat_map(|dj| (0..4).map(move |di| DyadicSquare::new(q.level, q.i + di, q.j + dj)))
            .collect()
    } else {
        vec![*q]
    };
    let tree = if k.is_empty() {
        None
    } else {
        Some(QuadTree::new(&WeightedPlanarMeasure::uniform(k, 1.0)?))
    };
    let mut entries = Vec::new();
    let mut levels = Vec::new();
    let mut total = KahanSum::new();
    for level in q.level..=max_depth {
        let evaluated: Vec<Option<BetaEntry>> = frontier
            .par_iter()
            .map(|p| {
                let tree = tree.as_ref()?;
                let idx = tree.atoms_in(&three_q(p));
                if idx.is_empty() {
                    return None;
                }
                let pts: Vec<PlanarPoint> = idx.iter().map(|&i| k[i]).collect();
                Some(BetaEntry {
                    square: *p,
                    beta: beta_of(&pts, p.side()),
                })
            })
            .collect();
        let live: Vec<BetaEntry> = evaluated.into_iter().flatten().collect();
        let sum = ksum(live.iter().map(|e| e.beta * e.beta * e.square.side()));
        total.add(sum);
        levels.push(LevelStats {
            level,
            count: live.len(),
            max_beta: live.iter().map(|e| e.beta).fold(0.0, f64::max),
            sum,
        });
        frontier = live.iter().flat_map(|e| e.square.children()).collect();
        entries.extend(live);
        if frontier.is_empty() {
            break;
        }
    }
    let criterion_sum = total.value();
    Ok(BetaProfile {
        entries,
        criterion_sum,
        normalized: criterion_sum / q.side(),
        resolution_level: max_depth,
        levels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdRegularity {
    pub constant: f64,
    pub witness_center: PlanarPoint,
    pub witness_radius: f64,
    pub samples: usize,
    pub seed: u64,
}

const REFINE_INTERVALS: usize = 8;
const GOLDEN_STEPS: usize = 60;

/// sup of H¹(Γ∩B(x,r))/r over seeded arc-length samples `x` and all `r`.
///
/// The ratio is evaluated at every vertex distance and every segment
/// tangency radius; the intervals around the best few are then refined by
/// golden-section search, since the supremum can sit between breakpoints.
pub fn ad_regularity(curve: &Polyline, samples: usize, seed: u64) -> Result<AdRegularity> {
    if samples == 0 {
        return Err(Error::PreconditionViolated(
            "samples must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<PlanarPoint> = (0..samples)
        .map(|_| curve.point_at(rng.random::<f64>() * curve.length()))
        .collect();
    let per_center: Vec<(f64, f64)> = centers.par_iter().map(|c| best_ratio(curve, c)).collect();
    let mut best = (f64::NEG_INFINITY, 0.0, centers[0]);
    for (c, &(v, r)) in centers.iter().zip(&per_center) {
        if v > best.0 {
            best = (v, r, *c);
        }
    }
    Ok(AdRegularity {
        constant: best.0,
        witness_center: best.2,
        witness_radius: best.1,
        samples,
        seed,
    })
}

fn best_ratio(curve: &Polyline, c: &PlanarPoint) -> (f64, f64) {
    let mut radii: Vec<f64> = curve.vertices().iter().map(|v| c.dist(v)).collect();
    radii.extend((0..curve.segment_count()).map(|k| {
        let (a, b) = curve.segment(k);
        segment_distance(a, b, c)
    }));
    radii.retain(|r| *r > 0.0);
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    if radii.is_empty() {
        return (0.0, 0.0);
    }
    let ratio = |r: f64| curve.length_in_ball(c, r) / r;
    let values: Vec<f64> = radii.iter().map(|&r| ratio(r)).collect();
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut best = (values[order[0]], radii[order[0]]);
    // below the first breakpoint the ball meets the curve in segments
    // through the center only, where the ratio is monotone
    for &k in order.iter().take(REFINE_INTERVALS) {
        for (lo, hi) in [
            (k.checked_sub(1).map(|p| radii[p]), radii[k]),
            (
                Some(radii[k]),
                radii.get(k + 1).copied().unwrap_or(radii[k]),
            ),
        ] {
            let Some(lo) = lo else { continue };
            if hi <= lo {
                continue;
            }
            let (r, v) = golden_max(&ratio, lo, hi);
            if v > best.0 {
                best = (v, r);
            }
        }
    }
    best
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_STEPS {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}
