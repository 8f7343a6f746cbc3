#![allow(dead_code)]

use menger_core::corona::{ArcDensity, CurveAllocation};
use menger_core::dyadic::Square;
use menger_core::jones::Polyline;
use menger_core::measure::PlanarPoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct AllocationInstance {
    pub curve: Polyline,
    pub sigma: Vec<(Square, f64)>,
    pub enlarged: Vec<Square>,
    pub theta: f64,
}

/// Squares centered on a random Lipschitz graph, masses comparable to
/// their sides, sorted by side.
pub fn allocation_instance(seed: u64) -> AllocationInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nv = rng.random_range(3..10);
    let vertices: Vec<PlanarPoint> = (0..nv)
        .map(|k| PlanarPoint::new(k as f64 / (nv - 1) as f64, 0.5 + rng.random_range(-0.2..0.2)))
        .collect();
    let curve = Polyline::new(vertices).unwrap();
    let k = rng.random_range(3..25);
    let mut sq: Vec<(Square, f64)> = (0..k)
        .map(|_| {
            let p = curve.point_at(rng.random_range(0.0..curve.length()));
            let side = 0.5f64.powi(rng.random_range(3..8));
            (Square::centered(p, side), rng.random_range(0.1..1.0) * side)
        })
        .collect();
    sq.sort_by(|a, b| a.0.side.total_cmp(&b.0.side));
    let theta = sq.iter().map(|(q, s)| s / q.side).fold(0.0, f64::max);
    let enlarged = sq.iter().map(|(q, _)| q.scale(2.0)).collect();
    AllocationInstance { curve, sigma: sq, enlarged, theta }
}

/// ∫ g dH¹ summed piece by piece from point evaluations.
pub fn integrate(d: &ArcDensity) -> f64 {
    let mut cuts: Vec<f64> = d.intervals.iter().flat_map(|&(a, b)| [a, b]).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2).map(|w| d.value_at(0.5 * (w[0] + w[1])) * (w[1] - w[0])).sum()
}

/// Largest relative mass mismatch, plus whether every density lives on
/// Γ ∩ Q̃_i.
pub fn check_allocation(inst: &AllocationInstance, a: &CurveAllocation) -> (f64, bool) {
    let mut err: f64 = 0.0;
    let mut supported = true;
    for (i, d) in a.densities.iter().enumerate() {
        let s = inst.sigma[i].1;
        err = err.max((integrate(d) - s).abs() / s);
        let q = inst.enlarged[i];
        let slack = 1e-12 * q.side;
        for &(x, y) in &d.intervals {
            let p = inst.curve.point_at(0.5 * (x + y));
            supported &= p.x >= q.x0 - slack && p.x <= q.x1() + slack && p.y >= q.y0 - slack && p.y <= q.y1() + slack;
        }
    }
    (err, supported)
}

/// Sup of Σ g_i on a grid of arc-length samples, over θ.
pub fn sampled_sum_constant(inst: &AllocationInstance, a: &CurveAllocation, samples: usize) -> f64 {
    let len = inst.curve.length();
    (0..samples)
        .map(|k| {
            let s = len * (k as f64 + 0.5) / samples as f64;
            a.densities.iter().map(|d| d.value_at(s)).sum::<f64>()
        })
        .fold(0.0, f64::max)
        / inst.theta
}

/// Quarters squares of `[0,1)²` around random points, then splits any
/// square `Q_j` whose double meets a square smaller than `ℓ(Q_j)/2`.
pub fn regular_family(seed: u64, refinements: usize) -> Vec<Square> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fam: Vec<Square> = (0..16).map(|k| Square::new((k % 4) as f64 / 4.0, (k / 4) as f64 / 4.0, 0.25)).collect();
    let split = |q: Square| -> [Square; 4] {
        let h = q.side / 2.0;
        [
            Square::new(q.x0, q.y0, h),
            Square::new(q.x0 + h, q.y0, h),
            Square::new(q.x0, q.y0 + h, h),
            Square::new(q.x0 + h, q.y0 + h, h),
        ]
    };
    for _ in 0..refinements {
        let p = PlanarPoint::new(rng.random(), rng.random());
        let depth = rng.random_range(1..5);
        for _ in 0..depth {
            if let Some(i) = fam.iter().position(|q| q.contains(&p)) {
                let q = fam.swap_remove(i);
                fam.extend(split(q));
            }
        }
    }
    loop {
        let bad = fam.iter().position(|qj| {
            fam.iter().any(|qi| qi.intersects(&qj.scale(2.0)) && qi.side < qj.side / 2.0)
        });
        match bad {
            Some(j) => {
                let q = fam.swap_remove(j);
                fam.extend(split(q));
            }
            None => return fam,
        }
    }
}
