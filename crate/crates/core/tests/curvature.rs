use menger_core::curvature::{c2_total, cauchy_transform, mv_identity_report};
use menger_core::geometry::{curvature_perturbation_check, menger_curvature};
use menger_core::measure::{Atom, PlanarPoint, WeightedPlanarMeasure};
use num_complex::Complex64;
use proptest::prelude::*;

fn pt() -> impl Strategy<Value = PlanarPoint> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y)| PlanarPoint::new(x, y))
}

fn measure(n: std::ops::Range<usize>) -> impl Strategy<Value = WeightedPlanarMeasure> {
    prop::collection::vec((pt(), 0.1..2.0f64), n).prop_map(|v| {
        WeightedPlanarMeasure::new(v.into_iter().map(|(point, weight)| Atom { point, weight }).collect()).unwrap()
    })
}

// 1/R from the law of sines, 2 sin(angle at x) / |y - z|
fn curvature_oracle(x: &PlanarPoint, y: &PlanarPoint, z: &PlanarPoint) -> f64 {
    let (ux, uy) = (y.x - x.x, y.y - x.y);
    let (vx, vy) = (z.x - x.x, z.y - x.y);
    let angle = (ux * vy - uy * vx).atan2(ux * vx + uy * vy);
    let a = ((y.x - z.x).powi(2) + (y.y - z.y).powi(2)).sqrt();
    if a == 0.0 {
        return 0.0;
    }
    2.0 * angle.sin().abs() / a
}

fn brute_c2(m: &WeightedPlanarMeasure) -> f64 {
    let a = m.atoms();
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            for k in 0..a.len() {
                if i != j && j != k && i != k {
                    let c = curvature_oracle(&a[i].point, &a[j].point, &a[k].point);
                    s += a[i].weight * a[j].weight * a[k].weight * c * c;
                }
            }
        }
    }
    s
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn curvature_matches_law_of_sines(x in pt(), y in pt(), z in pt()) {
        let d = x.dist(&y).min(y.dist(&z)).min(x.dist(&z));
        prop_assume!(d > 1e-3);
        let c = menger_curvature(&x, &y, &z);
        let o = curvature_oracle(&x, &y, &z);
        prop_assert!((c - o).abs() <= 1e-9 * o.max(1.0), "{c} vs {o}");
    }

    #[test]
    fn lattice_collinear_is_zero(a in -50i32..50, b in -50i32..50, dx in -7i32..7, dy in -7i32..7, s in 1i32..9, t in -9i32..9) {
        prop_assume!((dx, dy) != (0, 0) && s != t && t != 0 && s != 0);
        let p = |k: i32| PlanarPoint::new(0.125 * (a + k * dx) as f64, 0.125 * (b + k * dy) as f64);
        prop_assert_eq!(menger_curvature(&p(0), &p(s), &p(t)), 0.0);
    }

    #[test]
    fn c2_matches_triple_oracle(m in measure(3..9)) {
        let c = c2_total(&m, 0.0).value;
        let o = brute_c2(&m);
        prop_assert!(rel(c, o) < 1e-8, "{c} vs {o}");
    }

    #[test]
    fn c2_scaling_laws(m in measure(3..20), t in 0.05..20.0f64, s in 0.05..20.0f64) {
        let c = c2_total(&m, 0.0).value;
        let dilated = m.map_points(|p| p.scaled(t)).unwrap();
        prop_assert!(rel(c2_total(&dilated, 0.0).value, c / (t * t)) < 1e-12);
        let heavier = m.scale_weights(s).unwrap();
        prop_assert!(rel(c2_total(&heavier, 0.0).value, s * s * s * c) < 1e-12);
    }

    #[test]
    fn c2_isometry_invariant(m in measure(3..20), angle in 0.0..6.3f64, tx in -5.0..5.0f64, ty in -5.0..5.0f64) {
        let (sn, cs) = angle.sin_cos();
        let moved = m.map_points(|p| PlanarPoint::new(cs * p.x - sn * p.y + tx, sn * p.x + cs * p.y + ty)).unwrap();
        let a = c2_total(&m, 0.0).value;
        let b = c2_total(&moved, 0.0).value;
        prop_assert!(rel(a, b) < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn mv_identity_expands_by_hand(m in measure(2..11)) {
        let d = m.min_pairwise_distance().unwrap();
        prop_assume!(d > 1e-4);
        let eps = d / 2.0;
        let a = m.atoms();
        // ‖C_ε μ‖² summed directly
        let mut lhs = 0.0;
        let mut diag = 0.0;
        for (i, ai) in a.iter().enumerate() {
            let mut t = Complex64::new(0.0, 0.0);
            for (j, aj) in a.iter().enumerate() {
                if i != j {
                    t += aj.weight / Complex64::new(aj.point.x - ai.point.x, aj.point.y - ai.point.y);
                    diag += ai.weight * aj.weight * aj.weight / ai.point.dist(&aj.point).powi(2);
                }
            }
            lhs += ai.weight * t.norm_sqr();
        }
        let curv = brute_c2(&m) / 6.0;
        prop_assert!(rel(lhs, curv + diag) < 1e-9, "identity by hand: {lhs} vs {}", curv + diag);
        let r = mv_identity_report(&m, eps).unwrap();
        prop_assert!(rel(r.lhs, lhs) < 1e-10);
        prop_assert!(rel(r.diagonal_term, diag) < 1e-10);
        prop_assert!((r.curvature_term - curv).abs() <= 1e-8 * curv.max(1.0));
        prop_assert!(r.residual.abs() <= 1e-9 * r.lhs.max(1.0));
    }

    #[test]
    fn cauchy_transform_is_the_plain_sum(m in measure(1..15), z in pt()) {
        let direct = m.atoms().iter().filter(|a| a.point.dist(&z) > 0.0).fold(Complex64::new(0.0, 0.0), |s, a| {
            s + a.weight / Complex64::new(a.point.x - z.x, a.point.y - z.y)
        });
        let c = cauchy_transform(&m, z, 0.0);
        prop_assert!((c - direct).norm() <= 1e-9 * direct.norm().max(1.0));
    }

    #[test]
    fn perturbation_bound_holds(x in pt(), y in pt(), z in pt(), t in 0.0..6.3f64, c6 in prop::sample::select(vec![1.0, 2.0, 10.0]), u in 0.0..1.0f64) {
        let dxy = x.dist(&y);
        prop_assume!(dxy > 1e-3 && x.dist(&z) > 1e-3);
        let r = dxy * (1.0 / c6 + u * (c6 - 1.0 / c6));
        let xp = PlanarPoint::new(y.x + r * t.cos(), y.y + r * t.sin());
        prop_assert!(curvature_perturbation_check(&x, &xp, &y, &z, c6).unwrap());
    }
}

#[test]
fn circle_triples_have_curvature_one_over_r() {
    for r in [0.1, 1.0, 10.0] {
        for k in 0..50 {
            let t = |j: f64| 0.37 * k as f64 + j;
            let p = |a: f64| PlanarPoint::new(3.0 + r * a.cos(), -2.0 + r * a.sin());
            let c = menger_curvature(&p(t(0.0)), &p(t(1.3)), &p(t(4.1)));
            assert!((c - 1.0 / r).abs() * r < 1e-10);
        }
    }
}
