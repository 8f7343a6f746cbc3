//! Stopping-time corona decomposition of a discrete measure: high density,
//! high curvature and low density squares, the elimination pass producing
//! the top family, stop families, good points, and the auxiliary
//! constructions built on top of them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{c2_monte_carlo, c2_total, CurvatureResult};
use crate::dyadic::{
    besicovitch_select, find_balanced_ancestor, is_doubling, unit, DyadicSquare, Square, SquareMass,
};
use crate::error::{Error, Result};
use crate::geometry::orient;
use crate::jones::Polyline;
use crate::measure::{delta, total_mass, PlanarPoint, WeightedPlanarMeasure};
use crate::quadtree::QuadTree;
use crate::summation::{ksum, KahanSum};

/// Side of the cells of a balanced square relative to the square.
pub const BALANCE_A: f64 = 1.0 / 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoronaParams {
    /// High density threshold.
    #[serde(rename = "A")]
    pub a: f64,
    /// Low density threshold.
    pub delta: f64,
    /// Curvature threshold.
    pub eps0: f64,
    /// Doubling parameters of top squares.
    pub doubling_a: f64,
    pub doubling_b: f64,
    /// Doubling parameters of classified squares.
    pub center_doubling_a: f64,
    pub center_doubling_b: f64,
    pub b_balance: f64,
    /// Quasi-stopping squares need `δ_μ(Q, Q̃) ≤ qstp_constant·A·θ(R)`.
    pub qstp_constant: f64,
    /// Exact c²(μ) up to this many atoms, sampled above.
    pub exact_cutoff: usize,
    pub mc_samples: u64,
    pub seed: u64,
}

impl Default for CoronaParams {
    fn default() -> Self {
        let (a, delta) = (100.0, 0.01);
        Self {
            a,
            delta,
            eps0: 1e-4,
            doubling_a: 16.0,
            doubling_b: 5000.0,
            center_doubling_a: 70.0,
            center_doubling_b: 5000.0,
            b_balance: 1e-6 * delta / a,
            qstp_constant: 10.0,
            exact_cutoff: 400,
            mc_samples: 1_000_000,
            seed: 0,
        }
    }
}

impl CoronaParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::PreconditionViolated(s.into()));
        if !(self.a > 1.0) {
            return bad("A must exceed 1");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0,1)");
        }
        if !(self.eps0 > 0.0) {
            return bad("eps0 must be positive");
        }
        if !(self.b_balance > 0.0 && self.b_balance < self.delta / self.a) {
            return bad("b_balance must lie in (0, delta/A)");
        }
        if !(self.doubling_a > 1.0
            && self.center_doubling_a > 1.0
            && self.doubling_b > 0.0
            && self.center_doubling_b > 0.0)
        {
            return bad("doubling parameters must be positive with a > 1");
        }
        if self.mc_samples == 0 {
            return bad("mc_samples must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassKind {
    #[serde(rename = "HD")]
    HighDensity,
    #[serde(rename = "HC")]
    HighCurvature,
    #[serde(rename = "LD")]
    LowDensity,
    #[serde(rename = "NONE")]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub kind: ClassKind,
    /// θ(Q)/θ(R).
    pub density_ratio: f64,
    /// Fraction of μ(Q) carried by atoms above the curvature threshold;
    /// evaluated once the density test fails.
    pub heavy_fraction: Option<f64>,
    /// The sparse square witnessing low density.
    pub sparse_square: Option<Square>,
}

/// Affine normalization `p ↦ (p − shift)·scale` into `[0,1)²`, `scale` a
/// power of two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub shift: PlanarPoint,
    pub scale: f64,
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization {
        shift: PlanarPoint::new(0.0, 0.0),
        scale: 1.0,
    };

    pub fn for_measure(m: &WeightedPlanarMeasure) -> Normalization {
        let Some((lo, hi)) = m.bounding_box() else {
            return Self::IDENTITY;
        };
        if lo.x >= 0.0 && lo.y >= 0.0 && hi.x < 1.0 && hi.y < 1.0 {
            return Self::IDENTITY;
        }
        let mut scale = 1.0;
        loop {
            let n = Normalization { shift: lo, scale };
            let h = n.apply(&hi);
            if h.x < 1.0 && h.y < 1.0 {
                return n;
            }
            scale /= 2.0;
        }
    }

    pub fn apply(&self, p: &PlanarPoint) -> PlanarPoint {
        PlanarPoint::new(
            (p.x - self.shift.x) * self.scale,
            (p.y - self.shift.y) * self.scale,
        )
    }

    pub fn invert(&self, p: &PlanarPoint) -> PlanarPoint {
        PlanarPoint::new(
            p.x / self.scale + self.shift.x,
            p.y / self.scale + self.shift.y,
        )
    }

    pub fn invert_square(&self, q: &Square) -> Square {
        let c = self.invert(&PlanarPoint::new(q.x0, q.y0));
        Square::new(c.x, c.y, q.side / self.scale)
    }

    pub fn measure(&self, m: &WeightedPlanarMeasure) -> Result<WeightedPlanarMeasure> {
        if *self == Self::IDENTITY {
            return Ok(m.clone());
        }
        m.map_points(|p| self.apply(&p))
    }
}

/// Smallest positive distance between atoms; `+∞` with fewer than two
/// distinct points.
pub fn resolution(points: &[PlanarPoint]) -> f64 {
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut best = f64::INFINITY;
            for q in &points[i + 1..] {
                let d = points[i].dist(q);
                if d > 0.0 && d < best {
                    best = d;
                }
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min)
}

fn all_collinear(points: &[PlanarPoint]) -> bool {
    let Some(a) = points.first() else { return true };
    let Some(b) = points.iter().find(|p| *p != a) else {
        return true;
    };
    points.iter().all(|p| orient(a, b, p) == 0.0)
}

/// Shared state for one measure: spatial index and memoized curvature
/// tests.
struct Ctx<'a> {
    params: &'a CoronaParams,
    pts: Vec<PlanarPoint>,
    ws: Vec<f64>,
    tree: QuadTree,
    collinear: bool,
    resolution: f64,
    heavy: Mutex<HashMap<(usize, u64, u64, u64), bool>>,
}

impl<'a> Ctx<'a> {
    fn new(m: &WeightedPlanarMeasure, params: &'a CoronaParams) -> Self {
        let pts = m.points();
        Ctx {
            params,
            ws: m.weights(),
            tree: QuadTree::new(m),
            collinear: all_collinear(&pts),
            resolution: resolution(&pts),
            pts,
            heavy: Mutex::new(HashMap::new()),
        }
    }

    fn mass(&self, q: &Square) -> f64 {
        self.tree.square_mass(q)
    }

    /// Whether Σ_{lo<|x−y|≤hi} w_y Σ_z w_z c(x,y,z)² ≥ t, with early exit.
    fn is_heavy(&self, x: usize, lo: f64, hi: f64, t: f64) -> bool {
        let key = (x, lo.to_bits(), hi.to_bits(), t.to_bits());
        if let Some(&v) = self.heavy.lock().unwrap().get(&key) {
            return v;
        }
        let v = if self.collinear {
            0.0 >= t
        } else {
            let p = self.pts[x];
            let mut acc = 0.0;
            let mut hit = acc >= t;
            for y in self.tree.atoms_in_ball(p, hi) {
                if hit {
                    break;
                }
                let q = self.pts[y];
                if !(p.dist(&q) > lo) {
                    continue;
                }
                let mut k = 0.0;
                for (z, r) in self.pts.iter().enumerate() {
                    let c = crate::geometry::menger_curvature(&p, &q, r);
                    k += c * c * self.ws[z];
                }
                acc += self.ws[y] * k;
                hit = acc >= t;
            }
            hit
        };
        self.heavy.lock().unwrap().insert(key, v);
        v
    }

    /// The three tests in order: high density, high curvature, low density.
    fn classify(&self, q: &Square, r: &DyadicSquare, theta_r: f64) -> Classification {
        let p = self.params;
        let mass_q = self.mass(q);
        let density_ratio = (mass_q / q.side) / theta_r;
        let mut out = Classification {
            kind: ClassKind::None,
            density_ratio,
            heavy_fraction: None,
            sparse_square: None,
        };
        if mass_q / q.side >= p.a * theta_r {
            out.kind = ClassKind::HighDensity;
            return out;
        }
        let lo = q.side / 1024.0;
        let hi = unit(r.j_index() - 4);
        let t = p.eps0 * theta_r * theta_r;
        let heavy = ksum(
            self.tree
                .atoms_in(q)
                .into_iter()
                .filter(|&x| self.is_heavy(x, lo, hi, t))
                .map(|x| self.ws[x]),
        );
        out.heavy_fraction = Some(if mass_q > 0.0 { heavy / mass_q } else { 0.0 });
        if heavy >= 0.5 * mass_q {
            out.kind = ClassKind::HighCurvature;
            return out;
        }
        let mut s = q.scale(128.0);
        while s.side <= r.side() / 8.0 {
            if self.mass(&s) / s.side <= p.delta * theta_r {
                out.kind = ClassKind::LowDensity;
                out.sparse_square = Some(s);
                return out;
            }
            s = s.scale(2.0);
        }
        out
    }

    /// Largest classified square centered at `c`, scanning sides
    /// `2^-n ℓ(R)`, `n ≥ 5`, down to the resolution.
    fn largest_classified(
        &self,
        c: PlanarPoint,
        r: &DyadicSquare,
        theta_r: f64,
    ) -> Option<(Square, Classification)> {
        let p = self.params;
        for n in 5..5 + crate::dyadic::DOUBLING_SCAN_LEVELS {
            let side = r.side() * unit(n);
            if side < self.resolution {
                break;
            }
            let q = Square::centered(c, side);
            if !is_doubling(&self.tree, q, p.center_doubling_a, p.center_doubling_b) {
                continue;
            }
            let cls = self.classify(&q, r, theta_r);
            if cls.kind != ClassKind::None {
                return Some((q, cls));
            }
        }
        None
    }

    fn bad(&self, r: &DyadicSquare) -> Vec<(DyadicSquare, Classification)> {
        let three = r.square().scale(3.0);
        let inside = self.tree.atoms_in(&three);
        if inside.len() <= 2 {
            return Vec::new();
        }
        let theta_r = self.mass(&r.square()) / r.side();
        let mut seen = HashSet::new();
        let centers: Vec<usize> = inside
            .iter()
            .copied()
            .filter(|&k| seen.insert((self.pts[k].x.to_bits(), self.pts[k].y.to_bits())))
            .collect();
        let found: Vec<Option<(Square, Classification)>> = centers
            .par_iter()
            .map(|&k| self.largest_classified(self.pts[k], r, theta_r))
            .collect();
        let mut classified: Vec<(usize, Square, Classification)> = centers
            .iter()
            .zip(found)
            .filter_map(|(&k, f)| f.map(|(q, c)| (k, q, c)))
            .collect();
        classified.sort_by(|a, b| b.1.side.total_cmp(&a.1.side).then(a.0.cmp(&b.0)));
        let mut candidates = Vec::new();
        let mut tags = Vec::new();
        for &x in &inside {
            let p = self.pts[x];
            if let Some(pos) = classified.iter().position(|(_, q, _)| q.contains(&p)) {
                if let Some(hat) = wrap(&classified[pos].1, &p) {
                    candidates.push((hat, p));
                    tags.push(pos);
                }
            }
        }
        let Ok(sel) = besicovitch_select(&candidates) else {
            return Vec::new();
        };
        let mut out: Vec<(DyadicSquare, Classification)> = Vec::new();
        for k in sel.kept {
            if out.iter().all(|(q, _)| *q != candidates[k].0) {
                out.push((candidates[k].0, classified[tags[k]].2.clone()));
            }
        }
        out
    }
}

/// The 4-dyadic square of side `4ℓ(q)` whose central half contains `q`
/// (smallest indices first), and whose half contains `x`.
fn wrap(q: &Square, x: &PlanarPoint) -> Option<DyadicSquare> {
    let level = -(q.side.log2().round() as i32);
    let u = unit(level);
    let (i, j) = (
        (q.x0 / u - 2.0).ceil() as i64,
        (q.y0 / u - 2.0).ceil() as i64,
    );
    for di in [0, -1, 1] {
        for dj in [0, -1, 1] {
            let hat = DyadicSquare::four(level, i + di, j + dj);
            if hat.half().contains_square(q) && hat.half().contains(x) {
                return Some(hat);
            }
        }
    }
    None
}

fn three_r_center(m: &WeightedPlanarMeasure, q: &Square, r: &DyadicSquare) -> bool {
    let c = q.center();
    let three = r.square().scale(3.0);
    m.atoms()
        .iter()
        .any(|a| a.point.dist(&c) <= 1e-12 * q.side && three.contains(&a.point))
}

/// Classifies `q` relative to the top square `r`.
pub fn classify_square(
    m: &WeightedPlanarMeasure,
    q: &Square,
    r: &DyadicSquare,
    params: &CoronaParams,
) -> Result<Classification> {
    params.validate()?;
    let fail = |s: &str| Err(Error::PreconditionViolated(s.into()));
    if !r.four_dyadic {
        return fail("R is not 4-dyadic");
    }
    let n = (r.side() / q.side).log2();
    if !(n.fract() == 0.0 && n >= 5.0 && r.side() * unit(n as i32) == q.side) {
        return fail("side of Q is not 2^-n ℓ(R) with n ≥ 5");
    }
    if !three_r_center(m, q, r) {
        return fail("Q is not centered at an atom of 3R");
    }
    let ctx = Ctx::new(m, params);
    if !is_doubling(
        &ctx.tree,
        *q,
        params.center_doubling_a,
        params.center_doubling_b,
    ) {
        return fail("Q is not doubling");
    }
    let theta_r = ctx.mass(&r.square()) / r.side();
    Ok(ctx.classify(q, r, theta_r))
}

/// Bad(R): the covering selection of 4-dyadic wrappers of the largest
/// classified squares through the atoms of 3R.
pub fn build_bad(
    m: &WeightedPlanarMeasure,
    r: &DyadicSquare,
    params: &CoronaParams,
) -> Result<Vec<(DyadicSquare, Classification)>> {
    params.validate()?;
    Ok(Ctx::new(m, params).bad(r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadEntry {
    pub square: DyadicSquare,
    pub class: Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopEntry {
    pub square: DyadicSquare,
    pub kind: ClassKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopNode {
    pub square: DyadicSquare,
    pub mass: f64,
    /// θ(R) in normalized coordinates.
    pub theta: f64,
    pub bad: Vec<BadEntry>,
    pub stop: Vec<StopEntry>,
    /// Atom indices of G(R).
    pub good: Vec<usize>,
    /// Chosen squares `R'` with `R ∈ Bad(R')`.
    pub generators: Vec<DyadicSquare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingAudit {
    /// Σ θ(Q)²μ(Q) over the top family, in original units.
    pub lhs: f64,
    /// μ(E) + c²(μ).
    pub rhs_base: f64,
    pub ratio: f64,
    pub mass: f64,
    pub c2: CurvatureResult,
}

/// Squares live in normalized coordinates; `normalization` maps back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoronaDecomposition {
    pub params: CoronaParams,
    pub normalization: Normalization,
    pub resolution: f64,
    pub root: DyadicSquare,
    pub top: Vec<TopNode>,
    /// Size of the family before elimination.
    pub top0_size: usize,
    pub audit: PackingAudit,
}

impl CoronaDecomposition {
    pub fn index_of(&self, q: &DyadicSquare) -> Option<usize> {
        self.top.iter().position(|n| n.square == *q)
    }

    pub fn normalized(&self, m: &WeightedPlanarMeasure) -> Result<WeightedPlanarMeasure> {
        self.normalization.measure(m)
    }
}

/// R₀: the 4-dyadic square whose central cell (1,1) is the smallest dyadic
/// square containing every atom.
pub fn root_square(points: &[PlanarPoint]) -> DyadicSquare {
    let mut level = 0;
    if points.iter().any(|p| p != &points[0]) {
        while level < 62 {
            let c = DyadicSquare::containing(&points[0], level + 1);
            if points
                .iter()
                .all(|p| DyadicSquare::containing(p, level + 1) == c)
            {
                level += 1;
            } else {
                break;
            }
        }
    }
    let d = DyadicSquare::containing(&points[0], level);
    DyadicSquare::four(level, d.i - 1, d.j - 1)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Available,
    Chosen,
    Unnecessary,
}

struct Link {
    from: usize,
    to: usize,
    alive: bool,
}

pub fn build_top(m: &WeightedPlanarMeasure, params: &CoronaParams) -> Result<CoronaDecomposition> {
    params.validate()?;
    if m.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let normalization = Normalization::for_measure(m);
    let mn = normalization.measure(m)?;
    let ctx = Ctx::new(&mn, params);
    let root = root_square(&ctx.pts);

    // Top₀ with generator links
    let mut bad: BTreeMap<DyadicSquare, Vec<(DyadicSquare, Classification)>> = BTreeMap::new();
    let mut parents: BTreeMap<DyadicSquare, Vec<DyadicSquare>> = BTreeMap::new();
    parents.insert(root, Vec::new());
    let mut frontier = vec![root];
    while !frontier.is_empty() {
        let generated: Vec<Vec<(DyadicSquare, Classification)>> =
            frontier.par_iter().map(|r| ctx.bad(r)).collect();
        let mut next = Vec::new();
        for (r, children) in frontier.iter().zip(generated) {
            for (q, _) in &children {
                let entry = parents.entry(*q).or_default();
                if entry.is_empty() && *q != root {
                    next.push(*q);
                }
                entry.push(*r);
            }
            bad.insert(*r, children);
        }
        next.sort();
        next.dedup();
        frontier = next;
    }
    let keys: Vec<DyadicSquare> = parents.keys().copied().collect();
    let index: HashMap<DyadicSquare, usize> =
        keys.iter().enumerate().map(|(k, q)| (*q, k)).collect();
    let mut links = Vec::new();
    let mut incoming = vec![Vec::new(); keys.len()];
    let mut outgoing = vec![Vec::new(); keys.len()];
    for (r, children) in &bad {
        for (q, _) in children {
            let (from, to) = (index[r], index[q]);
            incoming[to].push(links.len());
            outgoing[from].push(links.len());
            links.push(Link {
                from,
                to,
                alive: true,
            });
        }
    }

    // elimination, largest side first (key order)
    let squares: Vec<Square> = keys.iter().map(|q| q.square()).collect();
    let mut state = vec![State::Available; keys.len()];
    for k in 0..keys.len() {
        if state[k] != State::Available {
            continue;
        }
        state[k] = State::Chosen;
        let side_k = squares[k].side;
        let mut dead = Vec::new();
        for q in k + 1..keys.len() {
            if state[q] != State::Available || !squares[k].contains_square(&squares[q]) {
                continue;
            }
            for &l in &incoming[q] {
                if links[l].alive && side_k <= squares[links[l].from].side / 8.0 {
                    links[l].alive = false;
                }
            }
            if incoming[q].iter().all(|&l| !links[l].alive) {
                dead.push(q);
            }
        }
        while let Some(u) = dead.pop() {
            if state[u] != State::Available {
                continue;
            }
            state[u] = State::Unnecessary;
            for &l in &outgoing[u] {
                if !links[l].alive {
                    continue;
                }
                links[l].alive = false;
                let t = links[l].to;
                if state[t] == State::Available && incoming[t].iter().all(|&l| !links[l].alive) {
                    dead.push(t);
                }
            }
        }
    }
    let chosen: Vec<usize> = (0..keys.len())
        .filter(|&k| state[k] == State::Chosen)
        .collect();
    let chosen_set: HashSet<usize> = chosen.iter().copied().collect();

    let nodes: Vec<TopNode> = chosen
        .par_iter()
        .map(|&k| {
            let r = keys[k];
            let three = squares[k].scale(3.0);
            let mut stops: Vec<usize> = Vec::new();
            for &p in &chosen {
                let sp = &squares[p];
                if sp.side <= squares[k].side / 8.0
                    && sp.intersects(&three)
                    && stops.iter().all(|&s| !squares[s].contains_square(sp))
                {
                    stops.push(p);
                }
            }
            let stop = stops
                .iter()
                .map(|&p| {
                    let kind = parents[&keys[p]]
                        .iter()
                        .filter(|g| chosen_set.contains(&index[*g]))
                        .min()
                        .and_then(|g| {
                            bad[g]
                                .iter()
                                .find(|(q, _)| *q == keys[p])
                                .map(|(_, c)| c.kind)
                        })
                        .unwrap_or(ClassKind::None);
                    StopEntry {
                        square: keys[p],
                        kind,
                    }
                })
                .collect();
            let good = ctx
                .tree
                .atoms_in(&three)
                .into_iter()
                .filter(|&x| stops.iter().all(|&s| !squares[s].contains(&ctx.pts[x])))
                .collect();
            let mut generators: Vec<DyadicSquare> = parents[&r]
                .iter()
                .filter(|g| chosen_set.contains(&index[*g]))
                .copied()
                .collect();
            generators.sort();
            generators.dedup();
            let mass = ctx.mass(&squares[k]);
            TopNode {
                square: r,
                mass,
                theta: mass / squares[k].side,
                bad: bad[&r]
                    .iter()
                    .map(|(q, c)| BadEntry {
                        square: *q,
                        class: c.clone(),
                    })
                    .collect(),
                stop,
                good,
                generators,
            }
        })
        .collect();

    let mut d = CoronaDecomposition {
        params: params.clone(),
        normalization,
        resolution: ctx.resolution,
        root,
        top: nodes,
        top0_size: keys.len(),
        audit: PackingAudit {
            lhs: 0.0,
            rhs_base: 0.0,
            ratio: 0.0,
            mass: 0.0,
            c2: c2_total(&WeightedPlanarMeasure::empty(), 0.0),
        },
    };
    d.audit = packing_audit(&d, m)?;
    Ok(d)
}

/// Σ_{Q∈Top} θ(Q)²μ(Q) against μ(E) + c²(μ), in the original units.
pub fn packing_audit(d: &CoronaDecomposition, m: &WeightedPlanarMeasure) -> Result<PackingAudit> {
    let s = d.normalization.scale;
    let lhs = ksum(d.top.iter().map(|n| (s * n.theta).powi(2) * n.mass));
    let mass = total_mass(m);
    let c2 = if m.len() <= d.params.exact_cutoff {
        c2_total(m, 0.0)
    } else {
        c2_monte_carlo(m, 0.0, d.params.mc_samples, d.params.seed)?
    };
    let rhs_base = mass + c2.value;
    Ok(PackingAudit {
        lhs,
        rhs_base,
        ratio: lhs / rhs_base,
        mass,
        c2,
    })
}

/// Structural report over a decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub top_doubling: bool,
    pub root_contains_support: bool,
    pub stop_geometry: bool,
    pub good_points_valid: bool,
    /// Largest number of half stop squares `½P`, `P ∈ Stop(R)`, at an atom.
    pub max_half_overlap: usize,
    /// sup μ(P)/(A θ(R) ℓ(P)) over dyadic `P` meeting a bad square `Q` of
    /// `R` with `ℓ(Q) ≤ ℓ(P) ≤ ℓ(R)`.
    pub density_constant: f64,
}

pub fn structure_report(
    d: &CoronaDecomposition,
    m: &WeightedPlanarMeasure,
) -> Result<StructureReport> {
    let mn = d.normalized(m)?;
    let tree = QuadTree::new(&mn);
    let pts = mn.points();
    let p = &d.params;
    let top_doubling = d
        .top
        .iter()
        .all(|n| is_doubling(&tree, n.square, p.doubling_a, p.doubling_b));
    let root_contains_support =
        d.top.first().map(|n| n.square) == Some(d.root) && pts.iter().all(|x| d.root.contains(x));
    let tops: Vec<Square> = d.top.iter().map(|n| n.square.square()).collect();
    let mut stop_geometry = true;
    let mut good_points_valid = true;
    let mut max_half_overlap = 0;
    let mut density_constant: f64 = 0.0;
    for n in &d.top {
        let r = n.square.square();
        let three = r.scale(3.0);
        let qualifies = |s: &Square| s.intersects(&three) && s.side <= r.side / 8.0;
        for st in &n.stop {
            let sq = st.square.square();
            let maximal = tops
                .iter()
                .all(|t| !(qualifies(t) && t.contains_square(&sq) && *t != sq));
            stop_geometry &= qualifies(&sq) && maximal && tops.contains(&sq);
        }
        for &g in &n.good {
            good_points_valid &=
                three.contains(&pts[g]) && n.stop.iter().all(|s| !s.square.contains(&pts[g]));
        }
        let mut count: HashMap<usize, usize> = HashMap::new();
        for st in &n.stop {
            for x in tree.atoms_in(&st.square.half()) {
                *count.entry(x).or_default() += 1;
            }
        }
        max_half_overlap = max_half_overlap.max(count.values().copied().max().unwrap_or(0));
        for b in &n.bad {
            let q = b.square.square();
            let mut level = -(q.side.log2().round() as i32);
            while unit(level) <= r.side {
                let u = unit(level);
                let (i0, i1) = ((q.x0 / u).floor() as i64, (q.x1() / u).ceil() as i64);
                let (j0, j1) = ((q.y0 / u).floor() as i64, (q.y1() / u).ceil() as i64);
                for i in i0..i1 {
                    for j in j0..j1 {
                        let cell = DyadicSquare::new(level, i, j).square();
                        if cell.intersects(&q) {
                            density_constant =
                                density_constant.max(tree.square_mass(&cell) / (p.a * n.theta * u));
                        }
                    }
                }
                level -= 1;
            }
        }
    }
    Ok(StructureReport {
        top_doubling,
        root_contains_support,
        stop_geometry,
        good_points_valid,
        max_half_overlap,
        density_constant,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiStop {
    pub stop: DyadicSquare,
    /// Q̃, in normalized coordinates.
    pub square: Square,
    /// No balanced ancestor with controlled δ_μ exists; Q̃ = Q.
    pub fallback: bool,
    pub delta: f64,
}

/// Qstp(R): for each stop square the smallest balanced concentric
/// enlargement `Q̃` with `ℓ(Q̃) ≤ 8ℓ(R)` and
/// `δ_μ(Q, Q̃) ≤ qstp_constant·A·θ(R)`.
pub fn quasi_stopping(
    d: &CoronaDecomposition,
    m: &WeightedPlanarMeasure,
    r: usize,
) -> Result<Vec<QuasiStop>> {
    let node = d.top.get(r).ok_or(Error::IndexOutOfRange {
        index: r,
        len: d.top.len(),
    })?;
    let mn = d.normalized(m)?;
    let bound = d.params.qstp_constant * d.params.a * node.theta;
    node.stop
        .par_iter()
        .map(|st| {
            let q = st.square.square();
            if let Some(s) =
                find_balanced_ancestor(&mn, q, node.square, BALANCE_A, d.params.b_balance)
            {
                let dl = delta(&mn, q, s)?;
                if dl <= bound {
                    return Ok(QuasiStop {
                        stop: st.square,
                        square: s,
                        fallback: false,
                        delta: dl,
                    });
                }
            }
            Ok(QuasiStop {
                stop: st.square,
                square: q,
                fallback: true,
                delta: 0.0,
            })
        })
        .collect()
}

/// inf over `squares` of ℓ(Q) + dist(x,Q)/40, and dist(x, good)/40.
pub fn ell_x(x: &PlanarPoint, squares: &[Square], good: &[PlanarPoint]) -> f64 {
    let a = squares
        .iter()
        .map(|q| q.side + q.dist_to_point(x) / 40.0)
        .fold(f64::INFINITY, f64::min);
    let b = good
        .iter()
        .map(|g| g.dist(x) / 40.0)
        .fold(f64::INFINITY, f64::min);
    a.min(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSet {
    /// Distinct points, original coordinates.
    pub points: Vec<PlanarPoint>,
    pub good_count: usize,
    /// Atom chosen as a_Q per quasi-stopping square.
    pub representatives: Vec<Option<usize>>,
    pub quasi_stop: Vec<QuasiStop>,
    /// min over x ∈ K with ℓ_x > 0 of dist(x, K∖{x})/ℓ_x.
    pub separation: f64,
}

/// K = G(R) ∪ {a_Q}: a_Q is the atom of 3Q minimizing ℓ_·.
pub fn k_set(d: &CoronaDecomposition, m: &WeightedPlanarMeasure, r: usize) -> Result<KSet> {
    let qs = quasi_stopping(d, m, r)?;
    let node = &d.top[r];
    let mn = d.normalized(m)?;
    let pts = mn.points();
    let tree = QuadTree::new(&mn);
    let squares: Vec<Square> = qs.iter().map(|q| q.square).collect();
    let good: Vec<PlanarPoint> = node.good.iter().map(|&g| pts[g]).collect();
    let ell = |x: &PlanarPoint| ell_x(x, &squares, &good);
    let representatives: Vec<Option<usize>> = qs
        .iter()
        .map(|q| {
            let mut best: Option<(f64, usize)> = None;
            for k in tree.atoms_in(&q.stop.square().scale(3.0)) {
                let v = ell(&pts[k]);
                if best.is_none_or(|b| v < b.0) {
                    best = Some((v, k));
                }
            }
            best.map(|b| b.1)
        })
        .collect();
    let mut chosen: Vec<usize> = node.good.clone();
    chosen.extend(representatives.iter().flatten());
    let mut seen = HashSet::new();
    let mut k_norm = Vec::new();
    let mut points = Vec::new();
    for k in chosen {
        if seen.insert((pts[k].x.to_bits(), pts[k].y.to_bits())) {
            k_norm.push(pts[k]);
            points.push(m.point(k));
        }
    }
    let separation = k_norm
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let l = ell(x);
            if !(l > 0.0) {
                return f64::INFINITY;
            }
            let nearest = k_norm
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, y)| x.dist(y))
                .fold(f64::INFINITY, f64::min);
            nearest / l
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(KSet {
        points,
        good_count: node.good.len(),
        representatives,
        quasi_stop: qs,
        separation,
    })
}

/// g_i = α_i on the arc-length intervals A_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcDensity {
    pub alpha: f64,
    pub intervals: Vec<(f64, f64)>,
}

impl ArcDensity {
    pub fn integral(&self) -> f64 {
        self.alpha * ksum(self.intervals.iter().map(|(a, b)| b - a))
    }

    pub fn value_at(&self, s: f64) -> f64 {
        if self.intervals.iter().any(|(a, b)| *a <= s && s < *b) {
            self.alpha
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveAllocation {
    pub densities: Vec<ArcDensity>,
    /// max_i |∫g_i − σ(Q_i)| / σ(Q_i).
    pub mass_error: f64,
    /// sup Σ_i g_i / θ.
    pub sum_constant: f64,
    /// max_i ‖g_i‖_∞ ℓ(Q̃_i) / σ(Q_i).
    pub sup_constant: f64,
    /// Largest per-step ratio Σ_j σ(Q_{s_j}) / (θ H¹(Γ∩Q̃_k)).
    pub overlap_constant: f64,
}

fn merge(mut iv: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in iv {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Greedy allocation of the masses σ(Q_i) to densities on the curve.
///
/// Square `k` receives a constant density on the part of Γ∩Q̃_k where the
/// densities already placed by earlier squares meeting Q̃_k do not exceed
/// twice their average over Γ∩Q̃_k; by Chebyshev that part has at least
/// half the length.
pub fn allocate_on_curve(
    sigma: &[(Square, f64)],
    curve: &Polyline,
    enlarged: &[Square],
    theta_bound: f64,
) -> Result<CurveAllocation> {
    if sigma.len() != enlarged.len() {
        return Err(Error::DimensionMismatch {
            expected: sigma.len(),
            got: enlarged.len(),
        });
    }
    if !(theta_bound > 0.0) {
        return Err(Error::PreconditionViolated(
            "theta_bound must be positive".into(),
        ));
    }
    if enlarged.windows(2).any(|w| w[1].side < w[0].side) {
        return Err(Error::PreconditionViolated(
            "enlarged squares must have nondecreasing sides".into(),
        ));
    }
    if sigma.iter().any(|(_, s)| !(*s >= 0.0)) {
        return Err(Error::PreconditionViolated(
            "masses must be nonnegative".into(),
        ));
    }
    let clips: Vec<Vec<(f64, f64)>> = enlarged.iter().map(|q| curve.clip_to_square(q)).collect();
    for (k, c) in clips.iter().enumerate() {
        if !(c.iter().map(|(a, b)| b - a).sum::<f64>() > 0.0) {
            return Err(Error::CurveMissesSquare { index: k });
        }
    }
    let mut densities: Vec<ArcDensity> = Vec::with_capacity(sigma.len());
    let mut overlap_constant: f64 = 0.0;
    for k in 0..sigma.len() {
        let clip = &clips[k];
        let h = ksum(clip.iter().map(|(a, b)| b - a));
        let earlier: Vec<usize> = (0..k)
            .filter(|&j| enlarged[j].dist_to_square(&enlarged[k]) == 0.0)
            .collect();
        let prior = ksum(earlier.iter().map(|&j| sigma[j].1));
        overlap_constant = overlap_constant.max(prior / (theta_bound * h));
        let threshold = 2.0 * prior / h;
        let mut cuts: Vec<f64> = clip.iter().flat_map(|(a, b)| [*a, *b]).collect();
        for &j in &earlier {
            for (a, b) in &densities[j].intervals {
                cuts.push(*a);
                cuts.push(*b);
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut pieces = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            if b <= a || !clip.iter().any(|(c0, c1)| *c0 <= mid && mid < *c1) {
                continue;
            }
            let load: f64 = earlier.iter().map(|&j| densities[j].value_at(mid)).sum();
            if load <= threshold {
                pieces.push((a, b));
            }
        }
        let intervals = merge(pieces);
        let len = ksum(intervals.iter().map(|(a, b)| b - a));
        let alpha = if sigma[k].1 > 0.0 {
            sigma[k].1 / len
        } else {
            0.0
        };
        densities.push(ArcDensity { alpha, intervals });
    }
    let mut all_cuts: Vec<f64> = densities
        .iter()
        .flat_map(|d| d.intervals.iter().flat_map(|(a, b)| [*a, *b]))
        .collect();
    all_cuts.sort_by(f64::total_cmp);
    all_cuts.dedup();
    let mut sup_sum: f64 = 0.0;
    for w in all_cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let mut s = KahanSum::new();
        for d in &densities {
            s.add(d.value_at(mid));
        }
        sup_sum = sup_sum.max(s.value());
    }
    let mut mass_error: f64 = 0.0;
    let mut sup_constant: f64 = 0.0;
    for (k, d) in densities.iter().enumerate() {
        let s = sigma[k].1;
        if s > 0.0 {
            mass_error = mass_error.max((d.integral() - s).abs() / s);
            sup_constant = sup_constant.max(d.alpha * enlarged[k].side / s);
        }
    }
    Ok(CurveAllocation {
        densities,
        mass_error,
        sum_constant: sup_sum / theta_bound,
        sup_constant,
        overlap_constant,
    })
}

/// Q_i ∩ 2Q_j ≠ ∅ ⇒ ℓ(Q_i) ≥ ℓ(Q_j)/2 for every pair.
pub fn is_regular_family(squares: &[Square]) -> bool {
    squares.iter().all(|qi| {
        squares
            .iter()
            .all(|qj| !qi.intersects(&qj.scale(2.0)) || qi.side >= qj.side / 2.0)
    })
}

/// ℓ_y: side of the first square containing `y`, zero if none does.
pub fn local_scale(y: &PlanarPoint, squares: &[Square]) -> f64 {
    squares
        .iter()
        .find(|q| q.contains(y))
        .map_or(0.0, |q| q.side)
}

/// For a regular family of disjoint squares and `L ≥ 1`: whenever
/// `|x−y| ≥ ℓ_x/c29`, also `|x−y| ≥ ℓ_y/c30` with `c30 = max(2L, 2·c29)`.
/// Vacuously true when the hypothesis fails.
pub fn scale_comparability(
    x: &PlanarPoint,
    y: &PlanarPoint,
    squares: &[Square],
    c29: f64,
    l: f64,
) -> Result<bool> {
    if !(c29 > 0.0 && l >= 1.0) {
        return Err(Error::PreconditionViolated("need c29 > 0 and L ≥ 1".into()));
    }
    let d = x.dist(y);
    let (lx, ly) = (local_scale(x, squares), local_scale(y, squares));
    if d < lx / c29 {
        return Ok(true);
    }
    let c30 = (2.0 * l).max(2.0 * c29);
    Ok(d >= ly / c30)
}
