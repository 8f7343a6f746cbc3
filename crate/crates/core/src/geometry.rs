//! Pointwise planar geometry: Menger curvature, strips of minimal width and
//! the curvature perturbation bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::PlanarPoint;

#[inline]
fn coord(p: &PlanarPoint) -> robust::Coord<f64> {
    robust::Coord { x: p.x, y: p.y }
}

/// Twice the signed area of `abc`, with exact sign (adaptive predicate).
#[inline]
pub fn orient(a: &PlanarPoint, b: &PlanarPoint, c: &PlanarPoint) -> f64 {
    robust::orient2d(coord(a), coord(b), coord(c))
}

/// Curvature of a lexicographically sorted triple given its side lengths.
///
/// Every evaluation in the crate funnels through here so that pointwise
/// values and the global sums agree bit for bit.
#[inline]
pub(crate) fn menger_sorted(
    a: &PlanarPoint,
    b: &PlanarPoint,
    c: &PlanarPoint,
    dab: f64,
    dac: f64,
    dbc: f64,
) -> f64 {
    let denom = dab * dac;
    if denom < 1e-300 || dbc == 0.0 {
        return 0.0;
    }
    let o = orient(a, b, c);
    if o == 0.0 {
        return 0.0;
    }
    // dist(a, L_bc) = |o| / |b - c|
    2.0 * o.abs() / (denom * dbc)
}

/// Sorts three points lexicographically.
#[inline]
pub(crate) fn sort3(x: PlanarPoint, y: PlanarPoint, z: PlanarPoint) -> [PlanarPoint; 3] {
    let mut t = [x, y, z];
    if t[1].lex_cmp(&t[0]).is_lt() {
        t.swap(0, 1);
    }
    if t[2].lex_cmp(&t[1]).is_lt() {
        t.swap(1, 2);
        if t[1].lex_cmp(&t[0]).is_lt() {
            t.swap(0, 1);
        }
    }
    t
}

/// c(x,y,z) = 1/R(x,y,z); zero for collinear or coincident points.
pub fn menger_curvature(x: &PlanarPoint, y: &PlanarPoint, z: &PlanarPoint) -> f64 {
    let [a, b, c] = sort3(*x, *y, *z);
    menger_sorted(&a, &b, &c, a.dist(&b), a.dist(&c), b.dist(&c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub x: PlanarPoint,
    pub y: PlanarPoint,
    pub z: PlanarPoint,
}

impl Triple {
    pub fn new(x: PlanarPoint, y: PlanarPoint, z: PlanarPoint) -> Self {
        Self { x, y, z }
    }

    pub fn curvature(&self) -> f64 {
        menger_curvature(&self.x, &self.y, &self.z)
    }

    /// `+∞` for degenerate triples.
    pub fn circumradius(&self) -> f64 {
        1.0 / self.curvature()
    }
}

/// Distance from `p` to the line through `a` and `b` (to `a` if `a = b`).
pub fn point_line_distance(p: &PlanarPoint, a: &PlanarPoint, b: &PlanarPoint) -> f64 {
    let d = a.dist(b);
    if d == 0.0 {
        return p.dist(a);
    }
    orient(a, b, p).abs() / d
}

/// Closed strip `{p : lo ≤ ⟨p, n⟩ ≤ hi}` with `n` the left normal of
/// `direction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strip {
    pub direction: PlanarPoint,
    pub lo: f64,
    pub hi: f64,
}

impl Strip {
    pub fn normal(&self) -> PlanarPoint {
        PlanarPoint::new(-self.direction.y, self.direction.x)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Convex hull, counter-clockwise, without collinear vertices.
pub fn convex_hull(points: &[PlanarPoint]) -> Vec<PlanarPoint> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.lex_cmp(b));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<PlanarPoint> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &PlanarPoint>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for q in iter {
            while hull.len() >= start + 2
                && orient(&hull[hull.len() - 2], &hull[hull.len() - 1], q) <= 0.0
            {
                hull.pop();
            }
            hull.push(*q);
        }
        hull.pop();
    }
    hull
}

fn spread(hull: &[PlanarPoint], n: PlanarPoint) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in hull {
        let t = v.x * n.x + v.y * n.y;
        lo = lo.min(t);
        hi = hi.max(t);
    }
    (lo, hi)
}

/// Thinnest closed strip containing `points` (a line when they are
/// collinear). The optimum is flush with a hull edge; antipodal vertices
/// are tracked with rotating calipers.
pub fn min_width_strip(points: &[PlanarPoint]) -> Strip {
    assert!(!points.is_empty(), "min_width_strip needs a point");
    let hull = convex_hull(points);
    if hull.len() == 1 {
        let p = hull[0];
        return Strip {
            direction: PlanarPoint::new(1.0, 0.0),
            lo: p.y,
            hi: p.y,
        };
    }
    if hull.len() == 2 {
        let (a, b) = (hull[0], hull[1]);
        let d = a.dist(&b);
        let direction = PlanarPoint::new((b.x - a.x) / d, (b.y - a.y) / d);
        let t = -direction.y * a.x + direction.x * a.y;
        return Strip {
            direction,
            lo: t,
            hi: t,
        };
    }
    let h = hull.len();
    let area = |i: usize, j: usize| orient(&hull[i], &hull[(i + 1) % h], &hull[j % h]).abs();
    let mut j = 1;
    let mut best_edge = 0;
    let mut best = f64::INFINITY;
    for i in 0..h {
        if j == i {
            j = (i + 1) % h;
        }
        while area(i, j + 1) > area(i, j) {
            j = (j + 1) % h;
        }
        let w = area(i, j) / hull[i].dist(&hull[(i + 1) % h]);
        if w < best {
            best = w;
            best_edge = i;
        }
    }
    let (a, b) = (hull[best_edge], hull[(best_edge + 1) % h]);
    let d = a.dist(&b);
    let direction = PlanarPoint::new((b.x - a.x) / d, (b.y - a.y) / d);
    let (lo, hi) = spread(&hull, PlanarPoint::new(-direction.y, direction.x));
    Strip { direction, lo, hi }
}

/// Relative slack allowed in the comparability test `|x'-y| ≃ |x-y|`, so
/// that `C₆ = 1` can be exercised with rounded inputs.
pub const COMPARABILITY_SLACK: f64 = 1e-12;

/// Whether |c(x,y,z) − c(x',y,z)| ≤ (4+2C₆)|x−x'|/(|x−y||x−z|).
pub fn curvature_perturbation_check(
    x: &PlanarPoint,
    x_prime: &PlanarPoint,
    y: &PlanarPoint,
    z: &PlanarPoint,
    c6: f64,
) -> Result<bool> {
    let dxy = x.dist(y);
    let dpy = x_prime.dist(y);
    let lo = dxy / c6 * (1.0 - COMPARABILITY_SLACK);
    let hi = c6 * dxy * (1.0 + COMPARABILITY_SLACK);
    if !(c6 >= 1.0) || dpy < lo || dpy > hi {
        return Err(Error::Inapplicable { c6 });
    }
    let lhs = (menger_curvature(x, y, z) - menger_curvature(x_prime, y, z)).abs();
    if lhs == 0.0 {
        return Ok(true);
    }
    let rhs = (4.0 + 2.0 * c6) * x.dist(x_prime) / (dxy * x.dist(z));
    Ok(lhs <= rhs)
}
