mod common;

use std::time::Instant;

use menger_core::capacity::{estimate_alpha, estimate_gamma, verify_feasibility, CapacityParams};
use menger_core::corona::{allocate_on_curve, build_top, structure_report, CoronaParams};
use menger_core::curvature::{c2_total, mv_identity_report, operator_norm_estimate};
use menger_core::dyadic::{balance_test, is_doubling, BalanceOutcome, DyadicSquare, Square};
use menger_core::generators::GeneratorSpec;
use menger_core::geometry::{curvature_perturbation_check, menger_curvature};
use menger_core::jones::beta_criterion;
use menger_core::measure::{Atom, PlanarPoint, WeightedPlanarMeasure};
use menger_core::transport::{operator_norm_transfer, teocurv_experiment, BilipschitzMapSpec, TransportParams};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn random_measure(n: usize, seed: u64) -> WeightedPlanarMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atoms = (0..n)
        .map(|_| Atom {
            point: PlanarPoint::new(rng.random(), rng.random()),
            weight: rng.random_range(0.1..2.0),
        })
        .collect();
    WeightedPlanarMeasure::new(atoms).unwrap()
}

fn cantor(depth: u32) -> WeightedPlanarMeasure {
    GeneratorSpec::Cantor4 { depth }.generate().unwrap()
}

fn law_of_sines(x: &PlanarPoint, y: &PlanarPoint, z: &PlanarPoint) -> f64 {
    let (ux, uy) = (y.x - x.x, y.y - x.y);
    let (vx, vy) = (z.x - x.x, z.y - x.y);
    let angle = (ux * vy - uy * vx).atan2(ux * vx + uy * vy);
    2.0 * angle.sin().abs() / y.dist(z)
}

fn mv_identity() -> Outcome {
    let start = Instant::now();
    // expansion by hand on small instances
    let mut worst_hand: f64 = 0.0;
    for seed in 0..10 {
        let m = random_measure(3 + seed as usize % 8, 1000 + seed);
        let a = m.atoms();
        let (mut lhs, mut diag, mut c2) = (0.0, 0.0, 0.0);
        for (i, ai) in a.iter().enumerate() {
            let mut t = Complex64::new(0.0, 0.0);
            for (j, aj) in a.iter().enumerate() {
                if i == j {
                    continue;
                }
                t += aj.weight / Complex64::new(aj.point.x - ai.point.x, aj.point.y - ai.point.y);
                diag += ai.weight * aj.weight * aj.weight / ai.point.dist(&aj.point).powi(2);
                for (k, ak) in a.iter().enumerate() {
                    if k != i && k != j {
                        let c = law_of_sines(&ai.point, &aj.point, &ak.point);
                        c2 += ai.weight * aj.weight * ak.weight * c * c;
                    }
                }
            }
            lhs += ai.weight * t.norm_sqr();
        }
        worst_hand = worst_hand.max(rel(lhs, c2 / 6.0 + diag));
    }
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut measures: Vec<WeightedPlanarMeasure> =
        (0..50).map(|s| random_measure(10 + (s as usize * 37) % 291, s)).collect();
    measures.extend((1..=4).map(cantor));
    for m in &measures {
        let eps = m.min_pairwise_distance().unwrap() / 2.0;
        let r = mv_identity_report(m, eps).unwrap();
        worst = worst.max(r.residual.abs() / r.lhs.max(1.0));
        cases += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst_hand < 1e-9 && worst <= 1e-9 && secs < 60.0,
        format!("{cases} measures, max |residual|/max(lhs,1) = {worst:.2e}, hand expansion rel err {worst_hand:.2e}, {secs:.1}s"),
    )
}

fn menger_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut used = 0;
    for r in [0.1, 1.0, 10.0] {
        let c = PlanarPoint::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        for _ in 0..10_000 {
            let p: Vec<PlanarPoint> = (0..3)
                .map(|_| {
                    let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    PlanarPoint::new(c.x + r * t.cos(), c.y + r * t.sin())
                })
                .collect();
            if p[0].dist(&p[1]).min(p[1].dist(&p[2])).min(p[0].dist(&p[2])) < 1e-9 * r {
                continue;
            }
            worst = worst.max((menger_curvature(&p[0], &p[1], &p[2]) - 1.0 / r).abs() * r);
            used += 1;
        }
    }
    let mut nonzero = 0;
    for _ in 0..10_000 {
        let base = PlanarPoint::new(rng.random_range(-64..64) as f64 / 8.0, rng.random_range(-64..64) as f64 / 8.0);
        let (dx, dy) = (rng.random_range(-9..10) as f64 / 16.0, rng.random_range(-9..10) as f64 / 16.0);
        let at = |k: i32| PlanarPoint::new(base.x + k as f64 * dx, base.y + k as f64 * dy);
        let (s, t) = (rng.random_range(-20..20), rng.random_range(-20..20));
        if menger_curvature(&at(0), &at(s), &at(t)) != 0.0 {
            nonzero += 1;
        }
        let y: f64 = rng.random_range(-3.0..3.0);
        let h = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
        if menger_curvature(&PlanarPoint::new(h[0], y), &PlanarPoint::new(h[1], y), &PlanarPoint::new(h[2], y)) != 0.0 {
            nonzero += 1;
        }
    }
    (
        worst <= 1e-10 && nonzero == 0,
        format!("{used} circle triples, max |c - 1/r|·r = {worst:.2e}; 20000 collinear triples, {nonzero} nonzero"),
    )
}

fn scaling_laws() -> Outcome {
    let (mut dil, mut wts, mut iso): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for seed in 0..20 {
        let m = random_measure(20 + 2 * seed as usize, 300 + seed);
        let c = c2_total(&m, 0.0).value;
        for t in [0.01, 0.37, 3.0, 11.5] {
            let d = m.map_points(|p| p.scaled(t)).unwrap();
            dil = dil.max(rel(c2_total(&d, 0.0).value, c / (t * t)));
        }
        for s in [0.2, 1.7, 9.0] {
            wts = wts.max(rel(c2_total(&m.scale_weights(s).unwrap(), 0.0).value, s * s * s * c));
        }
        let (sn, cs) = (0.3 + seed as f64).sin_cos();
        let moved = m.map_points(|p| PlanarPoint::new(cs * p.x - sn * p.y + 2.5, sn * p.x + cs * p.y - 1.25)).unwrap();
        let reflected = m.map_points(|p| PlanarPoint::new(p.y, p.x)).unwrap();
        iso = iso.max(rel(c2_total(&moved, 0.0).value, c)).max(rel(c2_total(&reflected, 0.0).value, c));
    }
    (
        dil <= 1e-12 && wts <= 1e-12 && iso <= 1e-12,
        format!("20 measures, rel err dilation {dil:.2e}, weights {wts:.2e}, isometry {iso:.2e}"),
    )
}

fn curvature_perturbation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut count = 0;
    let mut failures = 0;
    while count < 100_000 {
        let c6 = [1.0, 2.0, 10.0][count % 3];
        let mut p = || PlanarPoint::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let (x, y, z) = (p(), p(), p());
        let d = x.dist(&y);
        if d < 1e-6 || x.dist(&z) < 1e-6 {
            continue;
        }
        let r = d * (1.0 / c6 + rng.random::<f64>() * (c6 - 1.0 / c6));
        let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let xp = PlanarPoint::new(y.x + r * t.cos(), y.y + r * t.sin());
        match curvature_perturbation_check(&x, &xp, &y, &z, c6) {
            Ok(true) => {}
            _ => failures += 1,
        }
        count += 1;
    }
    (failures == 0, format!("{count} quadruples with C6 in {{1, 2, 10}}, {failures} failures"))
}

fn balance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut unbalanced, mut balanced, mut violations) = (0, 0, 0);
    for k in 0..100 {
        let n = rng.random_range(2..200);
        let clustered = k % 2 == 1;
        let c = PlanarPoint::new(rng.random_range(0.1..0.9), rng.random_range(0.1..0.9));
        let r = 10f64.powf(rng.random_range(-7.0..-2.0));
        let atoms: Vec<Atom> = (0..n)
            .map(|i| {
                if clustered && i % 10 != 0 {
                    Atom {
                        point: PlanarPoint::new(c.x + r * rng.random_range(-1.0..1.0), c.y + r * rng.random_range(-1.0..1.0)),
                        weight: 1.0,
                    }
                } else {
                    Atom {
                        point: PlanarPoint::new(rng.random(), rng.random()),
                        weight: if clustered { 1e-9 } else { rng.random_range(0.1..1.0) },
                    }
                }
            })
            .collect();
        let m = WeightedPlanarMeasure::new(atoms).unwrap();
        let q = Square::new(0.0, 0.0, 1.0);
        for b in [1e-7, 1e-6] {
            let w = balance_test(&m, q, 1.0 / 40.0, b).unwrap();
            let mass = |s: &Square| m.atoms().iter().filter(|a| s.contains(&a.point)).map(|a| a.weight).sum::<f64>();
            if w.outcome == BalanceOutcome::Unbalanced {
                unbalanced += 1;
                let p = w.p.unwrap();
                if !(p.side <= q.side / 10.0 && mass(&p) >= (1.0 - 2e5 * b) * mass(&q)) {
                    violations += 1;
                }
            } else {
                balanced += 1;
            }
        }
    }
    (
        violations == 0 && unbalanced > 0,
        format!("{unbalanced} unbalanced and {balanced} balanced outcomes, {violations} witness violations"),
    )
}

fn teocurv() -> Outcome {
    let start = Instant::now();
    let maps: [BilipschitzMapSpec; 2] = [
        BilipschitzMapSpec::shear(2.0),
        "graph:0,0;0.25,0.2;0.5,0;0.75,0.25;1,0".parse().unwrap(),
    ];
    let p = TransportParams { exact_cutoff: 1024, mc_samples: 1_000_000, ..Default::default() };
    let gens: Vec<WeightedPlanarMeasure> = (1..=6).map(cantor).collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for map in &maps {
        let ratios: Vec<f64> = gens.iter().map(|m| teocurv_experiment(map, m, &p).unwrap().ratio_teocurv).collect();
        let max = ratios.iter().copied().fold(0.0, f64::max);
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = max / min;
        ok &= ratios.iter().all(|r| r.is_finite()) && spread <= 4.0;
        detail.push(format!(
            "{}: ratios {} max/min {spread:.3} last/first {:.3}",
            map.label(),
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join(" "),
            ratios[5] / ratios[0]
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 90.0;
    detail.push(format!("{secs:.1}s"));
    (ok, detail.join("; "))
}

fn corona_structure() -> Outcome {
    let mut measures = vec![GeneratorSpec::Segment { n: 1000 }.generate().unwrap()];
    measures.extend((1..=5).map(cantor));
    measures.extend((0..10).map(|s| GeneratorSpec::RandomCloud { n: 150, seed: s }.generate().unwrap()));
    let p = CoronaParams::default();
    let mut bad = Vec::new();
    let mut worst_overlap = 0;
    let mut tops = 0;
    for m in &measures {
        let label = m.name.clone().unwrap_or_default();
        let runs: Vec<String> = (0..3).map(|_| serde_json::to_string(&build_top(m, &p).unwrap()).unwrap()).collect();
        if runs[1] != runs[0] || runs[2] != runs[0] {
            bad.push(format!("{label}: nondeterministic"));
        }
        let d = build_top(m, &p).unwrap();
        tops += d.top.len();
        let mn = d.normalized(m).unwrap();
        if !d.top.iter().all(|n| is_doubling(&mn, n.square.square(), 16.0, 5000.0)) {
            bad.push(format!("{label}: top square not doubling"));
        }
        let s = structure_report(&d, m).unwrap();
        worst_overlap = worst_overlap.max(s.max_half_overlap);
        if !(s.top_doubling && s.stop_geometry && s.good_points_valid && s.root_contains_support) {
            bad.push(format!("{label}: {s:?}"));
        }
        if s.max_half_overlap > 20 {
            bad.push(format!("{label}: overlap {}", s.max_half_overlap));
        }
    }
    (
        bad.is_empty(),
        format!("{} measures, {tops} top squares, max ½-overlap {worst_overlap}{}", measures.len(), if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }),
    )
}

fn packing() -> Outcome {
    let p = CoronaParams::default();
    let ratios: Vec<f64> = (1..=6).map(|g| build_top(&cantor(g), &p).unwrap().audit.ratio).collect();
    let max = ratios.iter().copied().fold(0.0, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    (
        ratios.iter().all(|r| r.is_finite() && *r > 0.0) && max / min <= 5.0,
        format!(
            "cantor4 1-6 ratios {} max/min {:.3}",
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join(" "),
            max / min
        ),
    )
}

fn beta_checks() -> Outcome {
    let unit = DyadicSquare::new(0, 0, 0);
    let big = DyadicSquare::new(-1, 0, 0);
    let segment = GeneratorSpec::Segment { n: 1000 }.generate().unwrap().points();
    let diagonal: Vec<PlanarPoint> = (0..500).map(|k| PlanarPoint::new(k as f64 / 512.0, k as f64 / 512.0)).collect();
    let zero = [
        beta_criterion(&segment, &big, 12).unwrap().criterion_sum,
        beta_criterion(&diagonal, &unit, 12).unwrap().criterion_sum,
    ];
    let graph = GeneratorSpec::LipschitzGraph {
        breakpoints: vec![(0.0, 0.2), (0.3, 0.5), (0.55, 0.3), (0.8, 0.6), (1.0, 0.4)],
        n: 1000,
    }
    .generate()
    .unwrap()
    .points();
    let coarse = beta_criterion(&graph, &big, 11).unwrap().normalized;
    let fine = beta_criterion(&graph, &big, 12).unwrap().normalized;
    let change = (fine - coarse).abs() / coarse;
    let sums: Vec<f64> = (1..=6).map(|g| beta_criterion(&cantor(g).points(), &unit, 14).unwrap().criterion_sum).collect();
    let monotone = sums.windows(2).all(|w| w[1] > w[0]);
    (
        zero == [0.0, 0.0] && change <= 0.10 && monotone,
        format!(
            "collinear sums {:?}; graph normalized {coarse:.5} -> {fine:.5} ({:.2}%); cantor sums {}",
            zero,
            100.0 * change,
            sums.iter().map(|s| format!("{s:.4}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn capacity() -> Outcome {
    let mut supports: Vec<(String, Vec<PlanarPoint>)> = Vec::new();
    let specs = [
        GeneratorSpec::Cantor4 { depth: 1 },
        GeneratorSpec::Cantor4 { depth: 2 },
        GeneratorSpec::Cantor4 { depth: 3 },
        GeneratorSpec::Segment { n: 50 },
        GeneratorSpec::Circle { n: 40 },
        GeneratorSpec::Grid { n: 6 },
        GeneratorSpec::LipschitzGraph { breakpoints: vec![(0.0, 0.0), (0.5, 0.4), (1.0, 0.1)], n: 40 },
    ];
    for s in &specs {
        supports.push((s.label(), s.generate().unwrap().points()));
    }
    for seed in 0..5 {
        let s = GeneratorSpec::RandomCloud { n: 40, seed };
        supports.push((s.label(), s.generate().unwrap().points()));
    }
    let params = CapacityParams::default();
    let (mut worst_ratio, mut dil, mut iso): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut infeasible = Vec::new();
    let (sn, cs) = 0.9f64.sin_cos();
    for (label, pts) in &supports {
        for est in [estimate_gamma(pts, &params).unwrap(), estimate_alpha(pts, &CapacityParams { eta: Some(0.5), ..params.clone() }).unwrap()] {
            let r = verify_feasibility(&est.measure, est.resolution).unwrap();
            worst_ratio = worst_ratio.max(r.growth_ratio).max(r.curvature_ratio);
            if !(r.growth_ok && r.curvature_ok) {
                infeasible.push(label.clone());
            }
        }
        let base = estimate_gamma(pts, &params).unwrap().value;
        let dilated: Vec<PlanarPoint> = pts.iter().map(|p| p.scaled(3.7)).collect();
        dil = dil.max(rel(estimate_gamma(&dilated, &params).unwrap().value, 3.7 * base));
        let moved: Vec<PlanarPoint> = pts.iter().map(|p| PlanarPoint::new(cs * p.x - sn * p.y + 1.5, sn * p.x + cs * p.y - 0.75)).collect();
        iso = iso.max(rel(estimate_gamma(&moved, &params).unwrap().value, base));
    }
    let single = estimate_gamma(&[PlanarPoint::new(0.3, 0.4)], &params).unwrap().value;
    (
        infeasible.is_empty() && worst_ratio <= 1.0 + 1e-9 && dil <= 1e-9 && iso <= 1e-9 && single == 0.0,
        format!(
            "{} supports, worst feasibility ratio {worst_ratio:.12}, dilation rel err {dil:.2e}, isometry rel err {iso:.2e}, single point {single}{}",
            supports.len(),
            if infeasible.is_empty() { String::new() } else { format!("; infeasible: {}", infeasible.join(", ")) }
        ),
    )
}

fn allocation() -> Outcome {
    let (mut worst, mut co2, mut co3, mut overlap): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let mut all_supported = true;
    for seed in 0..20 {
        let inst = common::allocation_instance(seed);
        let a = allocate_on_curve(&inst.sigma, &inst.curve, &inst.enlarged, inst.theta).unwrap();
        let (err, supported) = common::check_allocation(&inst, &a);
        worst = worst.max(err);
        all_supported &= supported;
        co2 = co2.max(a.sum_constant);
        co3 = co3.max(a.sup_constant);
        overlap = overlap.max(a.overlap_constant);
    }
    (
        worst <= 1e-9 && all_supported && co2.is_finite() && co3.is_finite(),
        format!("20 instances, co1 max rel err {worst:.2e}, co2 {co2:.3}, co3 {co3:.3}, per-step overlap {overlap:.3}"),
    )
}

fn dense_norm(m: &WeightedPlanarMeasure) -> f64 {
    let a = m.atoms();
    let n = a.len();
    let mat = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(0.0, 0.0)
        } else {
            let d = Complex64::new(a[j].point.x - a[i].point.x, a[j].point.y - a[i].point.y);
            (a[i].weight * a[j].weight).sqrt() / d
        }
    });
    mat.singular_values().max()
}

fn operator_norm() -> Outcome {
    let shear = BilipschitzMapSpec::shear(2.0);
    let ratios: Vec<f64> =
        (1..=5).map(|g| operator_norm_transfer(&shear, &cantor(g), 0.0, 300, 7).unwrap().ratio).collect();
    let mut oracle: f64 = 0.0;
    let mut instances: Vec<WeightedPlanarMeasure> = vec![cantor(1), cantor(2)];
    instances.extend([5, 20, 35, 50].iter().map(|&n| random_measure(n, 900 + n as u64)));
    for m in &instances {
        let est = operator_norm_estimate(m, 0.0, 5000, 11).unwrap().value;
        oracle = oracle.max(rel(est, dense_norm(m)));
    }
    (
        ratios.iter().all(|r| (0.1..=10.0).contains(r)) && oracle <= 1e-6,
        format!(
            "shear:2 ratios {}; power iteration vs SVD max rel err {oracle:.2e} on {} measures",
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join(" "),
            instances.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("mv-identity", mv_identity),
        ("menger-exactness", menger_exactness),
        ("curvature-scaling", scaling_laws),
        ("curvature-perturbation", curvature_perturbation),
        ("balanced-squares", balance),
        ("transport-curvature", teocurv),
        ("corona-structure", corona_structure),
        ("packing-audit", packing),
        ("beta-numbers", beta_checks),
        ("capacity-estimator", capacity),
        ("curve-allocation", allocation),
        ("operator-norm-transfer", operator_norm),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = f();
        if !ok {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
