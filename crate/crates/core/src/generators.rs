//! Deterministic test measures inside the unit square.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{PlanarPoint, WeightedPlanarMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// Corner Cantor set: `4^depth` atoms at the centers of the surviving
    /// cells of side `4^-depth`.
    Cantor4 {
        depth: u32,
    },
    /// `n` atoms on `[0,1] × {0}`.
    Segment {
        n: usize,
    },
    /// `n` atoms on the circle of radius 0.4 about `(0.5, 0.5)`.
    Circle {
        n: usize,
    },
    /// `n` atoms on the graph of the piecewise-linear function through
    /// `breakpoints` over `[0,1]`.
    LipschitzGraph {
        breakpoints: Vec<(f64, f64)>,
        n: usize,
    },
    /// Cell centers of the `n × n` grid.
    Grid {
        n: usize,
    },
    RandomCloud {
        n: usize,
        seed: u64,
    },
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<WeightedPlanarMeasure> {
        generate(self)
    }

    pub fn label(&self) -> String {
        match self {
            GeneratorSpec::Cantor4 { depth } => format!("cantor4({depth})"),
            GeneratorSpec::Segment { n } => format!("segment({n})"),
            GeneratorSpec::Circle { n } => format!("circle({n})"),
            GeneratorSpec::LipschitzGraph { n, .. } => format!("lipschitz_graph({n})"),
            GeneratorSpec::Grid { n } => format!("grid({n})"),
            GeneratorSpec::RandomCloud { n, seed } => format!("random_cloud({n},{seed})"),
        }
    }
}

/// Piecewise-linear interpolation; constant outside the breakpoint range.
pub fn piecewise_linear(breakpoints: &[(f64, f64)], x: f64) -> f64 {
    let k = breakpoints.partition_point(|b| b.0 <= x);
    if k == 0 {
        return breakpoints[0].1;
    }
    if k == breakpoints.len() {
        return breakpoints[k - 1].1;
    }
    let ((x0, y0), (x1, y1)) = (breakpoints[k - 1], breakpoints[k]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

pub(crate) fn check_breakpoints(b: &[(f64, f64)]) -> Result<()> {
    if b.len() < 2 {
        return Err(Error::BadSpec("need at least two breakpoints".into()));
    }
    if b.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::BadSpec("breakpoints must be finite".into()));
    }
    if b.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::BadSpec("breakpoint abscissae must increase".into()));
    }
    Ok(())
}

fn positive(n: usize, what: &str) -> Result<()> {
    if n == 0 {
        return Err(Error::BadSpec(format!("{what} needs n ≥ 1")));
    }
    Ok(())
}

/// `k/(n-1)` for `k < n`, or `0` for a single sample.
fn abscissa(k: usize, n: usize) -> f64 {
    if n == 1 {
        0.0
    } else {
        k as f64 / (n - 1) as f64
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<WeightedPlanarMeasure> {
    let (points, w): (Vec<PlanarPoint>, f64) = match spec {
        GeneratorSpec::Cantor4 { depth } => {
            if *depth > 12 {
                return Err(Error::BadSpec(format!("cantor4 depth {depth} exceeds 12")));
            }
            let mut corners = vec![PlanarPoint::new(0.0, 0.0)];
            let mut side = 1.0;
            for _ in 0..*depth {
                let step = 0.75 * side;
                corners = corners
                    .iter()
                    .flat_map(|c| {
                        [(0.0, 0.0), (0.0, step), (step, 0.0), (step, step)]
                            .map(|(dx, dy)| PlanarPoint::new(c.x + dx, c.y + dy))
                    })
                    .collect();
                side /= 4.0;
            }
            let pts = corners
                .iter()
                .map(|c| PlanarPoint::new(c.x + side / 2.0, c.y + side / 2.0))
                .collect();
            (pts, 4f64.powi(-(*depth as i32)))
        }
        GeneratorSpec::Segment { n } => {
            positive(*n, "segment")?;
            (
                (0..*n)
                    .map(|k| PlanarPoint::new(abscissa(k, *n), 0.0))
                    .collect(),
                1.0 / *n as f64,
            )
        }
        GeneratorSpec::Circle { n } => {
            positive(*n, "circle")?;
            let pts = (0..*n)
                .map(|k| {
                    let t = std::f64::consts::TAU * k as f64 / *n as f64;
                    PlanarPoint::new(0.5 + 0.4 * t.cos(), 0.5 + 0.4 * t.sin())
                })
                .collect();
            (pts, 1.0 / *n as f64)
        }
        GeneratorSpec::LipschitzGraph { breakpoints, n } => {
            positive(*n, "lipschitz_graph")?;
            check_breakpoints(breakpoints)?;
            let pts = (0..*n)
                .map(|k| {
                    let x = abscissa(k, *n);
                    PlanarPoint::new(x, piecewise_linear(breakpoints, x))
                })
                .collect();
            (pts, 1.0 / *n as f64)
        }
        GeneratorSpec::Grid { n } => {
            positive(*n, "grid")?;
            let h = 1.0 / *n as f64;
            let pts = (0..*n)
                .flat_map(|j| {
                    (0..*n)
                        .map(move |i| PlanarPoint::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h))
                })
                .collect();
            (pts, h * h)
        }
        GeneratorSpec::RandomCloud { n, seed } => {
            positive(*n, "random_cloud")?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (
                (0..*n)
                    .map(|_| PlanarPoint::new(rng.random(), rng.random()))
                    .collect(),
                1.0 / *n as f64,
            )
        }
    };
    Ok(WeightedPlanarMeasure::uniform(&points, w)?.with_name(spec.label()))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::BadSpec(format!("{what}: not a count: {s:?}")))
}

/// `x0,y0;x1,y1;...`
pub fn parse_breakpoints(s: &str) -> Result<Vec<(f64, f64)>> {
    let pts = s
        .split(';')
        .map(|pair| {
            let v: Vec<&str> = pair.split(',').collect();
            if v.len() != 2 {
                return Err(Error::BadSpec(format!("breakpoint {pair:?} is not x,y")));
            }
            let f = |t: &str| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::BadSpec(format!("not a number: {t:?}")))
            };
            Ok((f(v[0])?, f(v[1])?))
        })
        .collect::<Result<Vec<_>>>()?;
    check_breakpoints(&pts)?;
    Ok(pts)
}

impl FromStr for GeneratorSpec {
    type Err = Error;

    /// `cantor4:D`, `segment:N`, `circle:N`, `grid:N`, `random:N:SEED`,
    /// `lipschitz:N:x0,y0;x1,y1;...`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::BadSpec(format!("missing parameters in {s:?}")))?;
        match kind {
            "cantor4" => Ok(GeneratorSpec::Cantor4 {
                depth: parse_usize(rest, kind)? as u32,
            }),
            "segment" => Ok(GeneratorSpec::Segment {
                n: parse_usize(rest, kind)?,
            }),
            "circle" => Ok(GeneratorSpec::Circle {
                n: parse_usize(rest, kind)?,
            }),
            "grid" => Ok(GeneratorSpec::Grid {
                n: parse_usize(rest, kind)?,
            }),
            "random" | "random_cloud" => {
                let (n, seed) = rest
                    .split_once(':')
                    .ok_or_else(|| Error::BadSpec("random:N:SEED".into()))?;
                let seed = seed
                    .trim()
                    .parse()
                    .map_err(|_| Error::BadSpec(format!("bad seed {seed:?}")))?;
                Ok(GeneratorSpec::RandomCloud {
                    n: parse_usize(n, kind)?,
                    seed,
                })
            }
            "lipschitz" | "lipschitz_graph" => {
                let (n, b) = rest
                    .split_once(':')
                    .ok_or_else(|| Error::BadSpec("lipschitz:N:breakpoints".into()))?;
                Ok(GeneratorSpec::LipschitzGraph {
                    breakpoints: parse_breakpoints(b)?,
                    n: parse_usize(n, kind)?,
                })
            }
            _ => Err(Error::BadSpec(format!("unknown generator {kind:?}"))),
        }
    }
}
