//! Curvature of measures, the curvature operator, and the discrete Cauchy
//! transform.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{menger_curvature, menger_sorted};
use crate::measure::{PlanarPoint, WeightedPlanarMeasure};
use crate::summation::{ksum, KahanSum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truncation {
    None,
    /// All three pairwise distances `> eps`.
    Epsilon {
        eps: f64,
    },
    /// All pairs with `|x - y| >= eps (ℓ_x + ℓ_y)`.
    Ell {
        eps: f64,
    },
}

impl Truncation {
    fn from_eps(eps: f64) -> Self {
        if eps > 0.0 {
            Truncation::Epsilon { eps }
        } else {
            Truncation::None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo { samples: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureResult {
    pub value: f64,
    pub truncation: Truncation,
    pub method: Method,
    /// Admissible ordered triples (exact) or samples landing on one (Monte
    /// Carlo).
    pub triple_count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

/// Atom positions and weights in lexicographic (x, y, w) order.
pub(crate) fn canonical(m: &WeightedPlanarMeasure) -> (Vec<PlanarPoint>, Vec<f64>) {
    let atoms = m.atoms();
    let mut idx: Vec<usize> = (0..atoms.len()).collect();
    idx.sort_by(|&a, &b| {
        atoms[a]
            .point
            .lex_cmp(&atoms[b].point)
            .then(atoms[a].weight.total_cmp(&atoms[b].weight))
    });
    (
        idx.iter().map(|&k| atoms[k].point).collect(),
        idx.iter().map(|&k| atoms[k].weight).collect(),
    )
}

/// c²_ε(μ): sum over ordered triples with all pairwise distances `> eps`
/// of `c² w_i w_j w_k`. Unordered triples are visited once in canonical
/// order and multiplied by 6.
pub fn c2_total(m: &WeightedPlanarMeasure, eps: f64) -> CurvatureResult {
    let (pts, ws) = canonical(m);
    let n = pts.len();
    let partials: Vec<(f64, u64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = pts[i];
            let row: Vec<f64> = pts[i + 1..].iter().map(|q| a.dist(q)).collect();
            let mut acc = KahanSum::new();
            let mut count = 0u64;
            for j in i + 1..n {
                let dab = row[j - i - 1];
                if !(dab > eps) {
                    continue;
                }
                let b = pts[j];
                let mut inner = KahanSum::new();
                for k in j + 1..n {
                    let dac = row[k - i - 1];
                    if !(dac > eps) {
                        continue;
                    }
                    let dbc = b.dist(&pts[k]);
                    if !(dbc > eps) {
                        continue;
                    }
                    count += 1;
                    let c = menger_sorted(&a, &b, &pts[k], dab, dac, dbc);
                    inner.add(c * c * ws[k]);
                }
                acc.add(ws[i] * ws[j] * inner.value());
            }
            (acc.value(), count)
        })
        .collect();
    let value = 6.0 * ksum(partials.iter().map(|p| p.0));
    let triple_count = 6 * partials.iter().map(|p| p.1).sum::<u64>();
    CurvatureResult {
        value,
        truncation: Truncation::from_eps(eps),
        method: Method::Exact,
        triple_count,
        stderr: None,
    }
}

fn check_index(i: usize, len: usize) -> Result<()> {
    if i >= len {
        return Err(Error::IndexOutOfRange { index: i, len });
    }
    Ok(())
}

/// c²_μ(x_i) = Σ over ordered admissible pairs (j, k) of `c(x_i,y,z)² w_j w_k`.
pub fn c2_point(i: usize, m: &WeightedPlanarMeasure, eps: f64) -> Result<f64> {
    check_index(i, m.len())?;
    let x = m.point(i);
    let atoms = m.atoms();
    let mut acc = KahanSum::new();
    for (j, aj) in atoms.iter().enumerate() {
        if j == i || !(x.dist(&aj.point) > eps) {
            continue;
        }
        let mut inner = KahanSum::new();
        for (k, ak) in atoms.iter().enumerate().skip(j + 1) {
            if k == i || !(x.dist(&ak.point) > eps) || !(aj.point.dist(&ak.point) > eps) {
                continue;
            }
            let c = menger_curvature(&x, &aj.point, &ak.point);
            inner.add(c * c * ak.weight);
        }
        acc.add(aj.weight * inner.value());
    }
    Ok(2.0 * acc.value())
}

/// c²_μ(A, B, C) with x ∈ A, y ∈ B, z ∈ C; not symmetrized.
pub fn c2_restricted(
    m: &WeightedPlanarMeasure,
    a: &[usize],
    b: &[usize],
    c: &[usize],
    eps: f64,
) -> Result<f64> {
    for &i in a.iter().chain(b).chain(c) {
        check_index(i, m.len())?;
    }
    let atoms = m.atoms();
    let partials: Vec<f64> = a
        .par_iter()
        .map(|&i| {
            let x = atoms[i].point;
            let mut acc = KahanSum::new();
            for &j in b {
                let y = atoms[j].point;
                if !(x.dist(&y) > eps) {
                    continue;
                }
                let mut inner = KahanSum::new();
                for &k in c {
                    let z = atoms[k].point;
                    if !(x.dist(&z) > eps) || !(y.dist(&z) > eps) {
                        continue;
                    }
                    let cv = menger_curvature(&x, &y, &z);
                    inner.add(cv * cv * atoms[k].weight);
                }
                acc.add(atoms[i].weight * atoms[j].weight * inner.value());
            }
            acc.value()
        })
        .collect();
    Ok(ksum(partials))
}

/// c² over triples with `|x-y| >= eps (ℓ_x + ℓ_y)` on all three pairs,
/// `ell[i]` being the scale attached to atom `i`.
pub fn c2_ell_truncated(
    m: &WeightedPlanarMeasure,
    ell: &[f64],
    eps: f64,
) -> Result<CurvatureResult> {
    if ell.len() != m.len() {
        return Err(Error::DimensionMismatch {
            expected: m.len(),
            got: ell.len(),
        });
    }
    let pts = m.points();
    let ws = m.weights();
    let n = pts.len();
    let ok = |a: usize, b: usize| pts[a].dist(&pts[b]) >= eps * (ell[a] + ell[b]);
    let partials: Vec<(f64, u64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = KahanSum::new();
            let mut count = 0;
            for j in i + 1..n {
                if !ok(i, j) {
                    continue;
                }
                for k in j + 1..n {
                    if !ok(i, k) || !ok(j, k) {
                        continue;
                    }
                    count += 1;
                    let c = menger_curvature(&pts[i], &pts[j], &pts[k]);
                    acc.add(c * c * ws[i] * ws[j] * ws[k]);
                }
            }
            (acc.value(), count)
        })
        .collect();
    Ok(CurvatureResult {
        value: 6.0 * ksum(partials.iter().map(|p| p.0)),
        truncation: Truncation::Ell { eps },
        method: Method::Exact,
        triple_count: 6 * partials.iter().map(|p| p.1).sum::<u64>(),
        stderr: None,
    })
}

/// k_μ(x, y) = Σ_z c(x,y,z)² w_z.
pub fn kernel(m: &WeightedPlanarMeasure, x: &PlanarPoint, y: &PlanarPoint) -> f64 {
    ksum(m.atoms().iter().map(|a| {
        let c = menger_curvature(x, y, &a.point);
        c * c * a.weight
    }))
}

/// (K_{μ,j} f)(x_i) = Σ over atoms y with |x_i − y| > 2^-j of k_μ(x_i,y) f(y) w_y.
pub fn k_operator(m: &WeightedPlanarMeasure, j: i32, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != m.len() {
        return Err(Error::DimensionMismatch {
            expected: m.len(),
            got: f.len(),
        });
    }
    let radius = 2f64.powi(-j);
    let pts = m.points();
    let ws = m.weights();
    Ok((0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = KahanSum::new();
            for b in 0..pts.len() {
                if !(pts[i].dist(&pts[b]) > radius) || f[b] == 0.0 {
                    continue;
                }
                acc.add(kernel(m, &pts[i], &pts[b]) * f[b] * ws[b]);
            }
            acc.value()
        })
        .collect())
}

/// C_ε μ(z) = Σ over atoms ξ with |ξ − z| > eps of w/(ξ − z).
pub fn cauchy_transform(m: &WeightedPlanarMeasure, z: PlanarPoint, eps: f64) -> Complex64 {
    let mut re = KahanSum::new();
    let mut im = KahanSum::new();
    for a in m.atoms() {
        if !(z.dist(&a.point) > eps) {
            continue;
        }
        let v = a.weight / Complex64::new(a.point.x - z.x, a.point.y - z.y);
        re.add(v.re);
        im.add(v.im);
    }
    Complex64::new(re.value(), im.value())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MVIdentityReport {
    pub lhs: f64,
    pub curvature_term: f64,
    pub diagonal_term: f64,
    pub residual: f64,
    pub eps: f64,
}

/// Exact discrete form of ‖C_ε μ‖²_{L²(μ)} = c²_ε(μ)/6 + diagonal.
///
/// Coincident atoms are grouped: the diagonal collects every pair (j, k)
/// sitting at one position, which reduces to Σ_i Σ_{j≠i} w_i w_j²/|z_i−z_j|²
/// when positions are distinct.
pub fn mv_identity_report(m: &WeightedPlanarMeasure, eps: f64) -> Result<MVIdentityReport> {
    if let Some(d) = m.min_pairwise_distance() {
        if !(eps < d) {
            return Err(Error::EpsTooLarge {
                eps,
                min_distance: d,
            });
        }
    }
    let (pts, ws) = canonical(m);
    // positions with their total weight
    let mut groups: Vec<(PlanarPoint, f64)> = Vec::new();
    for (p, &w) in pts.iter().zip(&ws) {
        match groups.last_mut() {
            Some((q, total)) if q == p => *total += w,
            _ => groups.push((*p, w)),
        }
    }
    let per_atom: Vec<(f64, f64)> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let zi = pts[i];
            let (mut re, mut im, mut diag) = (KahanSum::new(), KahanSum::new(), KahanSum::new());
            for &(zg, wg) in &groups {
                if !(zi.dist(&zg) > eps) {
                    continue;
                }
                let d = Complex64::new(zg.x - zi.x, zg.y - zi.y);
                let v = wg / d;
                re.add(v.re);
                im.add(v.im);
                diag.add(wg * wg / d.norm_sqr());
            }
            let s = Complex64::new(re.value(), im.value());
            (ws[i] * s.norm_sqr(), ws[i] * diag.value())
        })
        .collect();
    let lhs = ksum(per_atom.iter().map(|p| p.0));
    let diagonal_term = ksum(per_atom.iter().map(|p| p.1));
    let curvature_term = c2_total(m, eps).value / 6.0;
    Ok(MVIdentityReport {
        lhs,
        curvature_term,
        diagonal_term,
        residual: lhs - curvature_term - diagonal_term,
        eps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorNormEstimate {
    pub value: f64,
    pub iterations: usize,
    /// Relative change of the estimate over the last iteration.
    pub gap: f64,
    pub seed: u64,
}

/// Dense L²(μ)-normalized truncated Cauchy matrix
/// `M_ij = √(w_i w_j)/(z_j − z_i)` for `|z_i − z_j| > eps`.
pub fn cauchy_matrix(m: &WeightedPlanarMeasure, eps: f64) -> Vec<Complex64> {
    let pts = m.points();
    let ws = m.weights();
    let n = pts.len();
    let mut mat = vec![Complex64::new(0.0, 0.0); n * n];
    mat.par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            for j in 0..n {
                if i != j && pts[i].dist(&pts[j]) > eps {
                    let d = Complex64::new(pts[j].x - pts[i].x, pts[j].y - pts[i].y);
                    row[j] = (ws[i] * ws[j]).sqrt() / d;
                }
            }
        });
    mat
}

/// Largest singular value of [`cauchy_matrix`] by power iteration on M*M.
pub fn operator_norm_estimate(
    m: &WeightedPlanarMeasure,
    eps: f64,
    iterations: usize,
    seed: u64,
) -> Result<OperatorNormEstimate> {
    if iterations == 0 {
        return Err(Error::PreconditionViolated(
            "iterations must be at least 1".into(),
        ));
    }
    let n = m.len();
    let mat = cauchy_matrix(m, eps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = |x: &[Complex64]| ksum(x.iter().map(|c| c.norm_sqr())).sqrt();
    let nv = norm(&v);
    if n == 0 || nv == 0.0 {
        return Ok(OperatorNormEstimate {
            value: 0.0,
            iterations: 0,
            gap: 0.0,
            seed,
        });
    }
    v.iter_mut().for_each(|c| *c /= nv);
    let mut sigma = 0.0;
    let mut gap = f64::INFINITY;
    let mut done = 0;
    for it in 1..=iterations {
        let u: Vec<Complex64> = mat
            .par_chunks(n)
            .map(|row| {
                row.iter()
                    .zip(&v)
                    .fold(Complex64::new(0.0, 0.0), |s, (a, b)| s + a * b)
            })
            .collect();
        let next_sigma = norm(&u);
        // w = M^H u
        let w: Vec<Complex64> = (0..n)
            .into_par_iter()
            .map(|j| {
                (0..n).fold(Complex64::new(0.0, 0.0), |s, i| {
                    s + mat[i * n + j].conj() * u[i]
                })
            })
            .collect();
        gap = if next_sigma > 0.0 {
            (next_sigma - sigma).abs() / next_sigma
        } else {
            0.0
        };
        sigma = next_sigma;
        done = it;
        let nw = norm(&w);
        if nw == 0.0 {
            break;
        }
        v = w.into_iter().map(|c| c / nw).collect();
        if gap < 1e-15 {
            break;
        }
    }
    Ok(OperatorNormEstimate {
        value: sigma,
        iterations: done,
        gap,
        seed,
    })
}

/// Uniform ordered-triple sampling estimator of c²_ε(μ).
pub fn c2_monte_carlo(
    m: &WeightedPlanarMeasure,
    eps: f64,
    samples: u64,
    seed: u64,
) -> Result<CurvatureResult> {
    if samples == 0 {
        return Err(Error::PreconditionViolated(
            "samples must be at least 1".into(),
        ));
    }
    let n = m.len();
    let atoms = m.atoms();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (n as f64).powi(3);
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    let mut hits = 0u64;
    for s in 0..samples {
        let mut x = 0.0;
        if n >= 3 {
            let (i, j, k) = (
                rng.random_range(0..n),
                rng.random_range(0..n),
                rng.random_range(0..n),
            );
            let (a, b, c) = (atoms[i], atoms[j], atoms[k]);
            if i != j
                && j != k
                && i != k
                && a.point.dist(&b.point) > eps
                && a.point.dist(&c.point) > eps
                && b.point.dist(&c.point) > eps
            {
                hits += 1;
                let cv = menger_curvature(&a.point, &b.point, &c.point);
                x = cv * cv * a.weight * b.weight * c.weight * scale;
            }
        }
        // Welford update
        let delta = x - mean;
        mean += delta / (s + 1) as f64;
        m2 += delta * (x - mean);
    }
    let var = if samples > 1 {
        m2 / (samples - 1) as f64
    } else {
        0.0
    };
    Ok(CurvatureResult {
        value: mean,
        truncation: Truncation::from_eps(eps),
        method: Method::MonteCarlo { samples, seed },
        triple_count: hits,
        stderr: Some((var / samples as f64).sqrt()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(pts: &[(f64, f64)]) -> WeightedPlanarMeasure {
        WeightedPlanarMeasure::from_pairs(pts.iter().map(|&p| (p, 1.0))).unwrap()
    }

    fn corner() -> WeightedPlanarMeasure {
        unit(&[(0., 0.), (1., 0.), (0., 1.)])
    }

    #[test]
    fn c2_examples() {
        let r = c2_total(&corner(), 0.0);
        assert!((r.value - 12.0).abs() < 1e-13);
        assert_eq!(r.triple_count, 6);
        assert_eq!(
            c2_total(&unit(&[(0., 0.), (1., 1.), (2., 2.), (5., 5.)]), 0.0).value,
            0.0
        );
        assert_eq!(c2_total(&corner(), 2.0).value, 0.0);
    }

    #[test]
    fn point_and_restricted_examples() {
        let m = corner();
        assert!((c2_point(0, &m, 0.0).unwrap() - 4.0).abs() < 1e-13);
        assert_eq!(
            c2_point(3, &m, 0.0),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        );
        assert_eq!(c2_point(0, &unit(&[(1.0, 2.0)]), 0.0).unwrap(), 0.0);
        assert_eq!(
            c2_restricted(&m, &[], &[0, 1, 2], &[0, 1, 2], 0.0).unwrap(),
            0.0
        );
        assert!((c2_restricted(&m, &[0], &[1], &[2], 0.0).unwrap() - 2.0).abs() < 1e-14);
        let all = [0, 1, 2];
        let total = c2_restricted(&m, &all, &all, &all, 0.0).unwrap();
        assert!((total - c2_total(&m, 0.0).value).abs() < 1e-13);
    }

    #[test]
    fn k_operator_examples() {
        let m = corner();
        assert_eq!(k_operator(&m, 0, &[0.0; 3]).unwrap(), vec![0.0; 3]);
        let out = k_operator(&m, 1, &[1.0; 3]).unwrap();
        // each y ≠ x sees the third atom only: k(x,y) = c² = 2
        for v in out {
            assert!((v - 4.0).abs() < 1e-13);
        }
        assert!(k_operator(&m, 0, &[1.0]).is_err());
    }

    #[test]
    fn cauchy_examples() {
        let origin = unit(&[(0., 0.)]);
        assert_eq!(
            cauchy_transform(&origin, PlanarPoint::new(1.0, 0.0), 0.5),
            Complex64::new(-1.0, 0.0)
        );
        assert_eq!(
            cauchy_transform(&origin, PlanarPoint::new(1.0, 0.0), 2.0),
            Complex64::new(0.0, 0.0)
        );
        let pair = unit(&[(1., 0.), (-1., 0.)]);
        let v = cauchy_transform(&pair, PlanarPoint::new(0.0, 1.0), 0.0);
        // 1/(1 - i) + 1/(-1 - i) = (1 + i)/2 + (-1 + i)/2
        let direct = Complex64::new(1.0, -1.0).inv() + Complex64::new(-1.0, -1.0).inv();
        assert!((v - direct).norm() < 1e-15);
        assert!((v - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn mv_examples() {
        let r = mv_identity_report(&corner(), 0.0).unwrap();
        assert!((r.lhs - 7.0).abs() < 1e-13);
        assert!((r.curvature_term - 2.0).abs() < 1e-13);
        assert!((r.diagonal_term - 5.0).abs() < 1e-13);
        let two = mv_identity_report(&unit(&[(0., 0.), (0.5, 0.25)]), 0.0).unwrap();
        assert_eq!(two.curvature_term, 0.0);
        assert!((two.lhs - two.diagonal_term).abs() <= 1e-15 * two.lhs);
        assert!(matches!(
            mv_identity_report(&corner(), 1.0),
            Err(Error::EpsTooLarge { .. })
        ));
    }

    #[test]
    fn mv_with_coincident_atoms() {
        let m = unit(&[(0., 0.), (1., 0.), (0., 1.), (1., 0.)]);
        let r = mv_identity_report(&m, 0.0).unwrap();
        assert!(r.residual.abs() < 1e-12 * r.lhs);
    }

    #[test]
    fn norm_examples() {
        assert_eq!(
            operator_norm_estimate(&unit(&[(0., 0.)]), 0.0, 10, 1)
                .unwrap()
                .value,
            0.0
        );
        let d = 0.7;
        let e = operator_norm_estimate(&unit(&[(0., 0.), (d, 0.)]), 0.0, 50, 1).unwrap();
        assert!((e.value - 1.0 / d).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_examples() {
        let line = unit(&[(0., 0.), (1., 0.), (2., 0.), (3., 0.)]);
        assert_eq!(c2_monte_carlo(&line, 0.0, 1000, 5).unwrap().value, 0.0);
        assert_eq!(c2_monte_carlo(&corner(), 5.0, 1000, 5).unwrap().value, 0.0);
        let r = c2_monte_carlo(&corner(), 0.0, 200_000, 9).unwrap();
        assert!((r.value - 12.0).abs() <= 3.0 * r.stderr.unwrap());
    }
}
