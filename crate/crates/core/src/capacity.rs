//! Lower bounds for analytic capacity from feasible measures: linear growth
//! `μ(B(x,r)) ≤ r` and `c²(μ) ≤ μ(E)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corona::resolution;
use crate::curvature::{c2_monte_carlo, c2_total, Method};
use crate::error::{Error, Result};
use crate::measure::{growth_constant_above, total_mass, Atom, PlanarPoint, WeightedPlanarMeasure};
use crate::summation::ksum;

/// Relative mass gain a pass needs to be accepted; smaller gains are
/// rounding noise and would make the outcome depend on the coordinates.
pub const ACCEPT_MARGIN: f64 = 1e-12;

/// Slack on the feasibility ratios.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapacityParams {
    /// Smallest radius of the growth constraint; defaults to the minimum
    /// pairwise distance of the support.
    pub resolution: Option<f64>,
    /// Density cap `μ(B(x,r)) ≤ η r`; `None` means `η = 1`.
    pub eta: Option<f64>,
    pub passes: usize,
    pub step: f64,
    pub seed: u64,
    pub exact_cutoff: usize,
    pub mc_samples: u64,
}

impl Default for CapacityParams {
    fn default() -> Self {
        Self {
            resolution: None,
            eta: None,
            passes: 50,
            step: 0.1,
            seed: 0,
            exact_cutoff: 400,
            mc_samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub growth_ok: bool,
    /// sup μ(B(x,r))/r over atom centers and `r ≥ resolution`.
    pub growth_ratio: f64,
    pub curvature_ok: bool,
    /// c²(μ)/μ(E).
    pub curvature_ratio: f64,
    /// Overall factor applied to the candidate weights by the projections.
    pub scale_applied: f64,
    /// c² was sampled rather than summed.
    pub sampled: bool,
    pub resolution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub value: f64,
    pub measure: WeightedPlanarMeasure,
    pub report: FeasibilityReport,
    pub eta: Option<f64>,
    pub resolution: f64,
    pub passes: usize,
    pub accepted: usize,
    pub seed: u64,
}

fn c2_of(m: &WeightedPlanarMeasure, p: &CapacityParams) -> Result<(f64, bool)> {
    if m.len() <= p.exact_cutoff {
        Ok((c2_total(m, 0.0).value, false))
    } else {
        let r = c2_monte_carlo(m, 0.0, p.mc_samples, p.seed)?;
        Ok((r.value, matches!(r.method, Method::MonteCarlo { .. })))
    }
}

/// Scales `w` down until the growth ratio is at most `cap` and then until
/// `c² ≤ mass`. Returns the combined factor.
fn project(
    pts: &[PlanarPoint],
    w: &mut [f64],
    h: f64,
    cap: f64,
    p: &CapacityParams,
) -> Result<f64> {
    let m = WeightedPlanarMeasure::new(
        pts.iter()
            .zip(w.iter())
            .map(|(&point, &weight)| Atom { point, weight })
            .collect(),
    )?;
    let g = growth_constant_above(&m, h)?.constant;
    let s = if g > cap { cap / g } else { 1.0 };
    let m = m.scale_weights(s)?;
    let (c2, _) = c2_of(&m, p)?;
    let mass = total_mass(&m);
    let t = if c2 > mass { (mass / c2).sqrt() } else { 1.0 };
    for x in w.iter_mut() {
        *x *= s * t;
    }
    Ok(s * t)
}

fn dedup(support: &[PlanarPoint]) -> Vec<PlanarPoint> {
    let mut seen = std::collections::HashSet::new();
    support
        .iter()
        .copied()
        .filter(|p| seen.insert((p.x.to_bits(), p.y.to_bits())))
        .collect()
}

fn estimate(
    support: &[PlanarPoint],
    params: &CapacityParams,
    eta: Option<f64>,
) -> Result<CapacityEstimate> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if let Some(e) = eta {
        if !(e > 0.0) {
            return Err(Error::PreconditionViolated("eta must be positive".into()));
        }
    }
    if !(params.step > 0.0) {
        return Err(Error::PreconditionViolated("step must be positive".into()));
    }
    let pts = dedup(support);
    let h = match params.resolution {
        Some(h) if h > 0.0 => h,
        Some(_) => {
            return Err(Error::PreconditionViolated(
                "resolution must be positive".into(),
            ))
        }
        None => resolution(&pts),
    };
    if pts.len() < 2 || !h.is_finite() {
        let report = FeasibilityReport {
            growth_ok: true,
            growth_ratio: 0.0,
            curvature_ok: true,
            curvature_ratio: 0.0,
            scale_applied: 0.0,
            sampled: false,
            resolution: h,
        };
        return Ok(CapacityEstimate {
            value: 0.0,
            measure: WeightedPlanarMeasure::empty(),
            report,
            eta,
            resolution: h,
            passes: 0,
            accepted: 0,
            seed: params.seed,
        });
    }
    let cap = eta.unwrap_or(1.0).min(1.0);
    // candidate weights h keep every step scale covariant and make the
    // growth ratio at least 2 before projection
    let mut w = vec![h; pts.len()];
    let mut scale_applied = project(&pts, &mut w, h, cap, params)?;
    let mut mass: f64 = ksum(w.iter().copied());
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut accepted = 0;
    for _ in 0..params.passes {
        let mut trial = w.clone();
        for x in trial.iter_mut() {
            if rng.random::<bool>() {
                *x *= 1.0 + params.step;
            }
        }
        project(&pts, &mut trial, h, cap, params)?;
        let trial_mass = ksum(trial.iter().copied());
        if trial_mass > mass * (1.0 + ACCEPT_MARGIN) {
            scale_applied = ksum(trial.iter().copied()) / (h * pts.len() as f64);
            w = trial;
            mass = trial_mass;
            accepted += 1;
        }
    }
    let measure = WeightedPlanarMeasure::new(
        pts.iter()
            .zip(&w)
            .map(|(&point, &weight)| Atom { point, weight })
            .collect(),
    )?;
    let mut report = verify_with(&measure, h, params)?;
    report.scale_applied = scale_applied;
    Ok(CapacityEstimate {
        value: total_mass(&measure),
        measure,
        report,
        eta,
        resolution: h,
        passes: params.passes,
        accepted,
        seed: params.seed,
    })
}

/// Feasible measure on the support with large total mass.
pub fn estimate_gamma(
    support: &[PlanarPoint],
    params: &CapacityParams,
) -> Result<CapacityEstimate> {
    estimate(support, params, None)
}

/// As [`estimate_gamma`] with the extra cap `μ(B(x,r)) ≤ η r`,
/// `η = params.eta` (default 1).
pub fn estimate_alpha(
    support: &[PlanarPoint],
    params: &CapacityParams,
) -> Result<CapacityEstimate> {
    estimate(support, params, Some(params.eta.unwrap_or(1.0)))
}

fn verify_with(m: &WeightedPlanarMeasure, h: f64, p: &CapacityParams) -> Result<FeasibilityReport> {
    let mass = total_mass(m);
    let (growth_ratio, curvature_ratio, sampled) = if m.is_empty() || mass == 0.0 {
        (0.0, 0.0, false)
    } else {
        let g = growth_constant_above(m, h)?.constant;
        let (c2, sampled) = c2_of(m, p)?;
        (g, c2 / mass, sampled)
    };
    Ok(FeasibilityReport {
        growth_ok: growth_ratio <= 1.0 + FEASIBILITY_TOLERANCE,
        growth_ratio,
        curvature_ok: curvature_ratio <= 1.0 + FEASIBILITY_TOLERANCE,
        curvature_ratio,
        scale_applied: 1.0,
        sampled,
        resolution: h,
    })
}

/// Checks both constraints exactly (c² summed over all triples).
pub fn verify_feasibility(m: &WeightedPlanarMeasure, resolution: f64) -> Result<FeasibilityReport> {
    if !(resolution > 0.0) {
        return Err(Error::PreconditionViolated(
            "resolution must be positive".into(),
        ));
    }
    verify_with(
        m,
        resolution,
        &CapacityParams {
            exact_cutoff: usize::MAX,
            ..Default::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> PlanarPoint {
        PlanarPoint::new(x, y)
    }

    fn quick() -> CapacityParams {
        CapacityParams {
            passes: 10,
            ..Default::default()
        }
    }

    #[test]
    fn single_point_is_zero() {
        let e = estimate_gamma(&[p(1., 2.)], &quick()).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(estimate_gamma(&[], &quick()).is_err());
    }

    #[test]
    fn heavy_atom_is_infeasible() {
        let m = WeightedPlanarMeasure::from_pairs([((0., 0.), 10.0)]).unwrap();
        let r = verify_feasibility(&m, 1.0).unwrap();
        assert!(!r.growth_ok);
        assert_eq!(r.growth_ratio, 10.0);
        assert!(
            verify_feasibility(&WeightedPlanarMeasure::empty(), 1.0)
                .unwrap()
                .growth_ok
        );
    }

    #[test]
    fn collinear_is_growth_bound_only() {
        let pts: Vec<PlanarPoint> = (0..20).map(|k| p(k as f64 * 0.1, 0.0)).collect();
        let e = estimate_gamma(
            &pts,
            &CapacityParams {
                passes: 0,
                ..Default::default()
            },
        )
        .unwrap();
        // oracle: exhaustive growth scan of the uniform candidate
        let h = 0.1;
        let mut g: f64 = 0.0;
        for c in &pts {
            for r in pts
                .iter()
                .map(|q| c.dist(q))
                .filter(|&r| r >= h - 1e-15)
                .chain([h])
            {
                let n = pts.iter().filter(|q| c.dist(q) <= r).count() as f64;
                g = g.max(n * h / r);
            }
        }
        assert!(
            (e.value - 20.0 * h / g).abs() < 1e-12,
            "{} vs {}",
            e.value,
            20.0 * h / g
        );
        assert!(e.report.growth_ok && e.report.curvature_ok);
    }

    #[test]
    fn output_is_feasible_and_covariant() {
        let pts: Vec<PlanarPoint> = (0..30)
            .map(|k| p((k as f64 * 0.37).fract(), (k as f64 * 0.61).fract()))
            .collect();
        let e = estimate_gamma(&pts, &quick()).unwrap();
        let r = verify_feasibility(&e.measure, e.resolution).unwrap();
        assert!(r.growth_ok && r.curvature_ok, "{r:?}");
        let scaled: Vec<PlanarPoint> = pts.iter().map(|q| q.scaled(4.0)).collect();
        let e4 = estimate_gamma(&scaled, &quick()).unwrap();
        assert!((e4.value - 4.0 * e.value).abs() <= 1e-9 * e4.value);
    }

    #[test]
    fn alpha_cap() {
        let pts: Vec<PlanarPoint> = (0..15).map(|k| p(k as f64 / 14.0, 0.0)).collect();
        let g = estimate_gamma(&pts, &quick()).unwrap();
        let a1 = estimate_alpha(
            &pts,
            &CapacityParams {
                eta: Some(1.0),
                ..quick()
            },
        )
        .unwrap();
        assert!((a1.value - g.value).abs() <= 1e-12 * g.value);
        let half = estimate_alpha(
            &pts,
            &CapacityParams {
                eta: Some(0.5),
                ..quick()
            },
        )
        .unwrap();
        assert!((half.value - 0.5 * g.value).abs() <= 1e-9 * g.value);
    }
}
