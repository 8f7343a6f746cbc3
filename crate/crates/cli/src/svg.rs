use std::fmt::Write;

use menger_core::dyadic::Square;
use menger_core::measure::{PlanarPoint, WeightedPlanarMeasure};

const SIZE: f64 = 800.0;
const MARGIN: f64 = 20.0;

pub struct Picture {
    lo: PlanarPoint,
    hi: PlanarPoint,
    body: String,
}

impl Picture {
    /// Frame covering every point in `extent`.
    pub fn new(extent: impl IntoIterator<Item = PlanarPoint>) -> Self {
        let (mut lo, mut hi) = (PlanarPoint::new(f64::INFINITY, f64::INFINITY), PlanarPoint::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in extent {
            lo = PlanarPoint::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = PlanarPoint::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if !lo.x.is_finite() {
            (lo, hi) = (PlanarPoint::new(0.0, 0.0), PlanarPoint::new(1.0, 1.0));
        }
        let pad = 1e-9 + 0.02 * (hi.x - lo.x).max(hi.y - lo.y);
        Self {
            lo: PlanarPoint::new(lo.x - pad, lo.y - pad),
            hi: PlanarPoint::new(hi.x + pad, hi.y + pad),
            body: String::new(),
        }
    }

    fn scale(&self) -> f64 {
        (SIZE - 2.0 * MARGIN) / (self.hi.x - self.lo.x).max(self.hi.y - self.lo.y)
    }

    // y grows downwards in SVG
    fn map(&self, p: PlanarPoint) -> (f64, f64) {
        let s = self.scale();
        (MARGIN + (p.x - self.lo.x) * s, SIZE - MARGIN - (p.y - self.lo.y) * s)
    }

    pub fn square(&mut self, q: &Square, stroke: &str, width: f64) {
        let (x, y) = self.map(PlanarPoint::new(q.x0, q.y1()));
        let s = q.side * self.scale();
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.3}" y="{y:.3}" width="{s:.3}" height="{s:.3}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#
        );
    }

    pub fn atoms(&mut self, m: &WeightedPlanarMeasure, fill: &str) {
        let wmax = m.weights().iter().copied().fold(0.0, f64::max);
        for a in m.atoms() {
            let (x, y) = self.map(a.point);
            let r = 0.8 + 2.2 * (a.weight / wmax).sqrt();
            let _ = writeln!(self.body, r#"<circle cx="{x:.3}" cy="{y:.3}" r="{r:.2}" fill="{fill}"/>"#);
        }
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body
        )
    }
}

pub fn square_corners(q: &Square) -> [PlanarPoint; 2] {
    [PlanarPoint::new(q.x0, q.y0), PlanarPoint::new(q.x1(), q.y1())]
}
