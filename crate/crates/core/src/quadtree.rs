//! Point quadtree over the atoms of a measure.

use crate::dyadic::{Square, SquareMass};
use crate::measure::{PlanarPoint, WeightedPlanarMeasure};
use crate::summation::KahanSum;

const LEAF_CAPACITY: usize = 8;
const MAX_DEPTH: usize = 60;

#[derive(Debug, Clone)]
struct Node {
    square: Square,
    children: Option<[usize; 4]>,
    /// Range into `QuadTree::order`.
    start: usize,
    end: usize,
    mass: f64,
}

/// Immutable quadtree. Atoms of a node occupy a contiguous run of
/// `order`, sorted by atom index inside every leaf.
#[derive(Debug, Clone)]
pub struct QuadTree {
    nodes: Vec<Node>,
    order: Vec<usize>,
    points: Vec<PlanarPoint>,
    weights: Vec<f64>,
}

/// Power-of-two square anchored at the lower-left corner of the points.
fn root_square(points: &[PlanarPoint]) -> Square {
    if points.is_empty() {
        return Square::new(0.0, 0.0, 1.0);
    }
    let (mut lo, mut hi) = (points[0], points[0]);
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    let extent = (hi.x - lo.x).max(hi.y - lo.y).max(f64::MIN_POSITIVE);
    let mut side = 2f64.powi(extent.log2().floor() as i32);
    while !Square::new(lo.x, lo.y, side).contains(&hi) {
        side *= 2.0;
    }
    Square::new(lo.x, lo.y, side)
}

impl QuadTree {
    pub fn new(m: &WeightedPlanarMeasure) -> Self {
        let points = m.points();
        let weights = m.weights();
        let root = root_square(&points);
        let mut tree = QuadTree {
            nodes: Vec::new(),
            order: (0..points.len()).collect(),
            points,
            weights,
        };
        tree.build(root, 0, tree.order.len(), 0);
        tree
    }

    fn build(&mut self, square: Square, start: usize, end: usize, depth: usize) -> usize {
        let mass = self.order[start..end]
            .iter()
            .map(|&k| self.weights[k])
            .collect::<KahanSum>()
            .value();
        let id = self.nodes.len();
        self.nodes.push(Node {
            square,
            children: None,
            start,
            end,
            mass,
        });
        if end - start <= LEAF_CAPACITY || depth >= MAX_DEPTH {
            return id;
        }
        let half = square.side / 2.0;
        let (mx, my) = (square.x0 + half, square.y0 + half);
        let quadrant = |p: &PlanarPoint| (p.x >= mx) as usize + 2 * (p.y >= my) as usize;
        let mut buckets: [Vec<usize>; 4] = Default::default();
        for &k in &self.order[start..end] {
            buckets[quadrant(&self.points[k])].push(k);
        }
        let mut cursor = start;
        let mut ranges = [(0, 0); 4];
        for (q, b) in buckets.iter().enumerate() {
            self.order[cursor..cursor + b.len()].copy_from_slice(b);
            ranges[q] = (cursor, cursor + b.len());
            cursor += b.len();
        }
        let subs = [
            Square::new(square.x0, square.y0, half),
            Square::new(mx, square.y0, half),
            Square::new(square.x0, my, half),
            Square::new(mx, my, half),
        ];
        let mut children = [0; 4];
        for q in 0..4 {
            children[q] = self.build(subs[q], ranges[q].0, ranges[q].1, depth + 1);
        }
        self.nodes[id].children = Some(children);
        id
    }

    pub fn root(&self) -> Square {
        self.nodes[0].square
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Atom indices inside the half-open square, ascending.
    pub fn atoms_in(&self, sq: &Square) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect(
            0,
            &|n: &Square| sq.contains_square(n),
            &|n: &Square| sq.intersects(n),
            &|p| sq.contains(p),
            &mut out,
        );
        out.sort_unstable();
        out
    }

    /// Atom indices in the closed ball, ascending.
    pub fn atoms_in_ball(&self, c: PlanarPoint, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let inside = |n: &Square| {
            [
                (n.x0, n.y0),
                (n.x1(), n.y0),
                (n.x0, n.y1()),
                (n.x1(), n.y1()),
            ]
            .iter()
            .all(|&(x, y)| c.dist(&PlanarPoint::new(x, y)) <= r)
        };
        self.collect(
            0,
            &inside,
            &|n: &Square| n.dist_to_point(&c) <= r,
            &|p| c.dist(p) <= r,
            &mut out,
        );
        out.sort_unstable();
        out
    }

    fn collect(
        &self,
        id: usize,
        whole: &dyn Fn(&Square) -> bool,
        touches: &dyn Fn(&Square) -> bool,
        test: &dyn Fn(&PlanarPoint) -> bool,
        out: &mut Vec<usize>,
    ) {
        let n = &self.nodes[id];
        if n.start == n.end || !touches(&n.square) {
            return;
        }
        if whole(&n.square) {
            out.extend(
                self.order[n.start..n.end]
                    .iter()
                    .filter(|&&k| test(&self.points[k])),
            );
            return;
        }
        match n.children {
            Some(ch) => ch
                .iter()
                .for_each(|&c| self.collect(c, whole, touches, test, out)),
            None => out.extend(
                self.order[n.start..n.end]
                    .iter()
                    .filter(|&&k| test(&self.points[k])),
            ),
        }
    }

    fn mass_in(&self, id: usize, sq: &Square, acc: &mut KahanSum) {
        let n = &self.nodes[id];
        if n.start == n.end || !sq.intersects(&n.square) {
            return;
        }
        if sq.contains_square(&n.square) {
            acc.add(n.mass);
            return;
        }
        match n.children {
            Some(ch) => ch.iter().for_each(|&c| self.mass_in(c, sq, acc)),
            None => {
                for &k in &self.order[n.start..n.end] {
                    if sq.contains(&self.points[k]) {
                        acc.add(self.weights[k]);
                    }
                }
            }
        }
    }

    /// Checks that every internal node caches the sum of its children.
    pub fn check_masses(&self, rel: f64) -> bool {
        self.nodes.iter().all(|n| match n.children {
            None => true,
            Some(ch) => {
                let s: f64 = ch.iter().map(|&c| self.nodes[c].mass).sum();
                (s - n.mass).abs() <= rel * n.mass.abs().max(f64::MIN_POSITIVE)
            }
        })
    }

    /// Number of leaves holding each atom; 1 everywhere for a valid tree.
    pub fn leaf_multiplicity(&self) -> Vec<usize> {
        let mut count = vec![0; self.points.len()];
        for n in &self.nodes {
            if n.children.is_none() {
                for &k in &self.order[n.start..n.end] {
                    if n.square.contains(&self.points[k]) {
                        count[k] += 1;
                    }
                }
            }
        }
        count
    }
}

impl SquareMass for QuadTree {
    fn square_mass(&self, sq: &Square) -> f64 {
        let mut acc = KahanSum::new();
        if !self.nodes.is_empty() {
            self.mass_in(0, sq, &mut acc);
        }
        acc.value()
    }
}
