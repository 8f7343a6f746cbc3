//! Dyadic and 4-dyadic squares, doubling and balance tests, and the greedy
//! covering selector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{Atom, PlanarPoint, WeightedPlanarMeasure};
use crate::summation::KahanSum;

/// Half-open axis-parallel square `[x0, x0+side) × [y0, y0+side)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Square {
    pub x0: f64,
    pub y0: f64,
    pub side: f64,
}

impl Square {
    pub const fn new(x0: f64, y0: f64, side: f64) -> Self {
        Self { x0, y0, side }
    }

    pub fn centered(c: PlanarPoint, side: f64) -> Self {
        Self {
            x0: c.x - side / 2.0,
            y0: c.y - side / 2.0,
            side,
        }
    }

    pub fn x1(&self) -> f64 {
        self.x0 + self.side
    }

    pub fn y1(&self) -> f64 {
        self.y0 + self.side
    }

    pub fn center(&self) -> PlanarPoint {
        PlanarPoint::new(self.x0 + self.side / 2.0, self.y0 + self.side / 2.0)
    }

    #[inline]
    pub fn contains(&self, p: &PlanarPoint) -> bool {
        p.x >= self.x0 && p.x < self.x1() && p.y >= self.y0 && p.y < self.y1()
    }

    /// `other ⊂ self` as half-open sets.
    pub fn contains_square(&self, other: &Square) -> bool {
        other.x0 >= self.x0
            && other.x1() <= self.x1()
            && other.y0 >= self.y0
            && other.y1() <= self.y1()
    }

    pub fn intersects(&self, other: &Square) -> bool {
        self.x0 < other.x1() && other.x0 < self.x1() && self.y0 < other.y1() && other.y0 < self.y1()
    }

    /// λQ: same center, side λ·ℓ(Q).
    pub fn scale(&self, lambda: f64) -> Square {
        Square::centered(self.center(), self.side * lambda)
    }

    /// Smallest square concentric with `self` containing `r`.
    pub fn smallest_concentric_containing(&self, r: &Square) -> Square {
        let c = self.center();
        let half = (c.x - r.x0)
            .max(r.x1() - c.x)
            .max(c.y - r.y0)
            .max(r.y1() - c.y);
        Square::centered(c, 2.0 * half.max(self.side / 2.0))
    }

    /// Euclidean distance from `p` to the closed square.
    pub fn dist_to_point(&self, p: &PlanarPoint) -> f64 {
        let dx = (self.x0 - p.x).max(p.x - self.x1()).max(0.0);
        let dy = (self.y0 - p.y).max(p.y - self.y1()).max(0.0);
        (dx * dx + dy * dy).sqrt()
    }

    pub fn dist_to_square(&self, o: &Square) -> f64 {
        let dx = (self.x0 - o.x1()).max(o.x0 - self.x1()).max(0.0);
        let dy = (self.y0 - o.y1()).max(o.y0 - self.y1()).max(0.0);
        (dx * dx + dy * dy).sqrt()
    }

    pub fn diameter(&self) -> f64 {
        self.side * std::f64::consts::SQRT_2
    }
}

impl From<DyadicSquare> for Square {
    fn from(q: DyadicSquare) -> Self {
        q.square()
    }
}

impl From<&DyadicSquare> for Square {
    fn from(q: &DyadicSquare) -> Self {
        q.square()
    }
}

/// A square on the dyadic grid of level `level` (unit `2^-level`).
///
/// Plain squares are one grid cell; 4-dyadic squares are the 4×4 block of
/// cells with lower-left cell `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicSquare {
    pub level: i32,
    pub i: i64,
    pub j: i64,
    pub four_dyadic: bool,
}

/// `2^-level`, exact.
pub fn unit(level: i32) -> f64 {
    2f64.powi(-level)
}

impl DyadicSquare {
    pub const fn new(level: i32, i: i64, j: i64) -> Self {
        Self {
            level,
            i,
            j,
            four_dyadic: false,
        }
    }

    pub const fn four(level: i32, i: i64, j: i64) -> Self {
        Self {
            level,
            i,
            j,
            four_dyadic: true,
        }
    }

    /// J(Q), with `ℓ(Q) = 2^-J(Q)` up to the factor 4 of a 4-dyadic square.
    pub fn j_index(&self) -> i32 {
        if self.four_dyadic {
            self.level - 2
        } else {
            self.level
        }
    }

    pub fn side(&self) -> f64 {
        if self.four_dyadic {
            4.0 * unit(self.level)
        } else {
            unit(self.level)
        }
    }

    pub fn square(&self) -> Square {
        let u = unit(self.level);
        Square::new(self.i as f64 * u, self.j as f64 * u, self.side())
    }

    /// The level-`level` dyadic cell containing `p`.
    pub fn containing(p: &PlanarPoint, level: i32) -> Self {
        let s = unit(-level);
        Self::new(level, (p.x * s).floor() as i64, (p.y * s).floor() as i64)
    }

    /// ½Q; for a 4-dyadic square this is the central 2×2 block of cells.
    pub fn half(&self) -> Square {
        self.square().scale(0.5)
    }

    pub fn children(&self) -> [DyadicSquare; 4] {
        debug_assert!(!self.four_dyadic);
        let (l, i, j) = (self.level + 1, 2 * self.i, 2 * self.j);
        [
            Self::new(l, i, j),
            Self::new(l, i + 1, j),
            Self::new(l, i, j + 1),
            Self::new(l, i + 1, j + 1),
        ]
    }

    pub fn contains(&self, p: &PlanarPoint) -> bool {
        self.square().contains(p)
    }
}

/// Anything that can report μ(Q) for a half-open square.
pub trait SquareMass {
    fn square_mass(&self, sq: &Square) -> f64;
}

/// λQ for a dyadic square.
pub fn concentric_scale(q: DyadicSquare, lambda: f64) -> Square {
    q.square().scale(lambda)
}

/// μ(aQ) ≤ b·μ(Q).
pub fn is_doubling<M: SquareMass + ?Sized>(m: &M, q: impl Into<Square>, a: f64, b: f64) -> bool {
    let q = q.into();
    m.square_mass(&q.scale(a)) <= b * m.square_mass(&q)
}

/// Number of levels below `max_level` scanned by [`find_doubling_square`].
pub const DOUBLING_SCAN_LEVELS: i32 = 48;

/// Largest (a,b)-doubling square centered at `center` with side `2^-k`,
/// `k ≥ max_level`, scanning [`DOUBLING_SCAN_LEVELS`] levels.
pub fn find_doubling_square<M: SquareMass + ?Sized>(
    m: &M,
    center: PlanarPoint,
    a: f64,
    b: f64,
    max_level: i32,
) -> Option<Square> {
    (max_level..max_level + DOUBLING_SCAN_LEVELS)
        .map(|k| Square::centered(center, unit(k)))
        .find(|q| is_doubling(m, *q, a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceOutcome {
    Balanced,
    Unbalanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceWitness {
    pub outcome: BalanceOutcome,
    pub q1: Option<Square>,
    pub q2: Option<Square>,
    pub p: Option<Square>,
    /// μ(Q) of the tested square.
    pub mass: f64,
    /// μ(P) in the unbalanced case.
    pub p_mass: Option<f64>,
    pub grid: usize,
}

impl BalanceWitness {
    pub fn is_balanced(&self) -> bool {
        self.outcome == BalanceOutcome::Balanced
    }
}

/// Cell count per side used by [`balance_test`]: the least `N` with
/// `ℓ(Q)/N ≤ (a/10)ℓ(Q)`.
pub fn balance_grid(a: f64) -> usize {
    (10.0 / a - 1e-9).ceil() as usize
}

/// Cell index `k` with `x0 + k·cell <= x < x0 + (k+1)·cell` as evaluated in
/// floating point (last cell open to the right edge).
fn bin(x: f64, x0: f64, cell: f64, n: usize) -> usize {
    let mut k = (((x - x0) / cell).floor().max(0.0) as usize).min(n - 1);
    while k > 0 && x < x0 + k as f64 * cell {
        k -= 1;
    }
    while k + 1 < n && x >= x0 + (k + 1) as f64 * cell {
        k += 1;
    }
    k
}

/// Searches `q` for two b-heavy grid cells at distance at least `a·ℓ(q)`.
///
/// Without such a pair every heavy cell lies within `a·ℓ(q)` of every
/// other, and the square `P` spanned by them carries all but the light
/// cells' mass.
pub fn balance_test(
    m: &WeightedPlanarMeasure,
    q: impl Into<Square>,
    a: f64,
    b: f64,
) -> Result<BalanceWitness> {
    balance_test_atoms(m.atoms(), q.into(), a, b)
}

fn balance_test_atoms(atoms: &[Atom], q: Square, a: f64, b: f64) -> Result<BalanceWitness> {
    let n = balance_grid(a);
    let cell = q.side / n as f64;
    let mut cells: std::collections::BTreeMap<(usize, usize), KahanSum> = Default::default();
    let mut total = KahanSum::new();
    for Atom {
        point: p,
        weight: w,
    } in atoms
    {
        if !q.contains(p) {
            continue;
        }
        let ci = bin(p.x, q.x0, cell, n);
        let cj = bin(p.y, q.y0, cell, n);
        cells.entry((ci, cj)).or_default().add(*w);
        total.add(*w);
    }
    let mass = total.value();
    if !(mass > 0.0) {
        return Err(Error::EmptySquare);
    }
    let cell_square = |(ci, cj): (usize, usize)| {
        Square::new(q.x0 + ci as f64 * cell, q.y0 + cj as f64 * cell, cell)
    };
    let occupied: Vec<((usize, usize), f64)> =
        cells.into_iter().map(|(k, s)| (k, s.value())).collect();
    let heavy: Vec<(usize, usize)> = occupied
        .iter()
        .filter(|(_, w)| *w >= b * mass)
        .map(|(k, _)| *k)
        .collect();
    let far = a * q.side;
    for (s, &c1) in heavy.iter().enumerate() {
        let sq1 = cell_square(c1);
        for &c2 in &heavy[s + 1..] {
            let sq2 = cell_square(c2);
            if sq1.dist_to_square(&sq2) >= far {
                return Ok(BalanceWitness {
                    outcome: BalanceOutcome::Balanced,
                    q1: Some(sq1),
                    q2: Some(sq2),
                    p: None,
                    mass,
                    p_mass: None,
                    grid: n,
                });
            }
        }
    }
    // Concentration square: the bounding square of the heavy cells, or of
    // the heaviest cell when none is heavy.
    let core: Vec<(usize, usize)> = if heavy.is_empty() {
        let mut best = occupied[0];
        for &o in &occupied[1..] {
            if o.1 > best.1 {
                best = o;
            }
        }
        vec![best.0]
    } else {
        heavy
    };
    let (mut i0, mut j0, mut i1, mut j1) = (usize::MAX, usize::MAX, 0, 0);
    for &(ci, cj) in &core {
        i0 = i0.min(ci);
        j0 = j0.min(cj);
        i1 = i1.max(ci);
        j1 = j1.max(cj);
    }
    let span = (i1 - i0).max(j1 - j0) + 1;
    // slack so the cell edges, rounded separately, stay inside P
    let side = span as f64 * cell * (1.0 + 1e-9);
    let px = (q.x0 + i0 as f64 * cell).min(q.x1() - side);
    let py = (q.y0 + j0 as f64 * cell).min(q.y1() - side);
    let p = Square::new(px, py, side);
    let p_mass = crate::summation::ksum(
        atoms
            .iter()
            .filter(|a| q.contains(&a.point) && p.contains(&a.point))
            .map(|a| a.weight),
    );
    Ok(BalanceWitness {
        outcome: BalanceOutcome::Unbalanced,
        q1: None,
        q2: None,
        p: Some(p),
        mass,
        p_mass: Some(p_mass),
        grid: n,
    })
}

/// Smallest balanced concentric enlargement `2ⁿq`, `n ≥ 1`, with side at
/// most `8ℓ(R)`.
pub fn find_balanced_ancestor(
    m: &WeightedPlanarMeasure,
    q: impl Into<Square>,
    r: impl Into<Square>,
    a: f64,
    b: f64,
) -> Option<Square> {
    let (q, r) = (q.into(), r.into());
    let mut lambda = 2.0;
    loop {
        let s = q.scale(lambda);
        if s.side > 8.0 * r.side {
            return None;
        }
        if let Ok(w) = balance_test_atoms(m.atoms(), s, a, b) {
            if w.is_balanced() {
                return Some(s);
            }
        }
        lambda *= 2.0;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesicovitchSelection {
    /// Indices into the candidate list, in selection order.
    pub kept: Vec<usize>,
    /// Largest number of kept squares sharing a point.
    pub overlap: usize,
}

/// Greedy covering: candidates by decreasing side (ties by level, i, j,
/// then input position); keep one unless its center is already covered.
pub fn besicovitch_select(
    candidates: &[(DyadicSquare, PlanarPoint)],
) -> Result<BesicovitchSelection> {
    for (index, (q, c)) in candidates.iter().enumerate() {
        if !q.half().contains(c) {
            return Err(Error::CenterNotInHalf { index });
        }
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (qa, qb) = (&candidates[a].0, &candidates[b].0);
        qb.side()
            .total_cmp(&qa.side())
            .then((qa.level, qa.i, qa.j).cmp(&(qb.level, qb.i, qb.j)))
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    let mut kept_sq: Vec<Square> = Vec::new();
    for k in order {
        let (q, c) = &candidates[k];
        if kept_sq.iter().any(|s| s.contains(c)) {
            continue;
        }
        kept.push(k);
        kept_sq.push(q.square());
    }
    let overlap = max_overlap(&kept_sq);
    Ok(BesicovitchSelection { kept, overlap })
}

/// Maximum depth of a family of half-open squares. The deepest point can
/// be taken at `(x0 of one member, y0 of another)` of a common clique.
pub fn max_overlap(squares: &[Square]) -> usize {
    let mut best = 0;
    for a in squares {
        let nbrs: Vec<&Square> = squares.iter().filter(|s| s.intersects(a)).collect();
        for b in &nbrs {
            if b.y0 < a.y0 || b.y0 >= a.y1() {
                continue;
            }
            let p = PlanarPoint::new(a.x0, b.y0);
            let depth = nbrs.iter().filter(|s| s.contains(&p)).count();
            best = best.max(depth);
        }
    }
    best
}
