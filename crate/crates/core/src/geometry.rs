//! Cell addressing, vertex enumeration, the self-similar measure and quadrature.
//!
//! Points live in the affine frame with corners `p0 = (0,0)`, `p1 = (1,0)`,
//! `p2 = (0,1)`. Coordinates are exact dyadic rationals, so vertex identity
//! never depends on a floating-point tolerance.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;

use crate::calculus::GraphFunction;
use crate::error::{Error, Result};

/// Highest level [`enumerate_vertices`] accepts.
pub const DEFAULT_MAX_LEVEL: usize = 8;

/// Fractal dimensions of the gasket.
pub mod dims {
    /// Hausdorff dimension `log 3 / log 2`.
    pub fn hausdorff() -> f64 {
        3f64.ln() / 2f64.ln()
    }

    /// Walk dimension `log 5 / log 2`.
    pub fn walk() -> f64 {
        5f64.ln() / 2f64.ln()
    }

    /// Spectral dimension `log 9 / log 5`.
    pub fn spectral() -> f64 {
        9f64.ln() / 5f64.ln()
    }

    /// Sobolev embedding threshold into `L^∞`, half the spectral dimension.
    pub fn sigma_infinity() -> f64 {
        spectral() / 2.0
    }
}

/// Number of vertices of `V_m`.
pub fn vertex_count(level: usize) -> usize {
    (3usize.pow(level as u32 + 1) + 3) / 2
}

/// A word over `{0, 1, 2}` naming the cell `F_w(SG)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CellAddress(Vec<u8>);

impl CellAddress {
    pub fn new(word: Vec<u8>) -> Result<Self> {
        if let Some(&d) = word.iter().find(|&&d| d > 2) {
            return Err(Error::InvalidAddress(d));
        }
        Ok(Self(word))
    }

    /// The empty word, addressing the whole gasket.
    pub fn root() -> Self {
        Self(Vec::new())
    }

    /// Address of the `index`-th cell of `level` in lexicographic word order.
    pub fn from_index(level: usize, mut index: usize) -> Self {
        let mut word = vec![0u8; level];
        for slot in word.iter_mut().rev() {
            *slot = (index % 3) as u8;
            index /= 3;
        }
        Self(word)
    }

    pub fn word(&self) -> &[u8] {
        &self.0
    }

    pub fn level(&self) -> usize {
        self.0.len()
    }

    /// Position of this cell among all cells of its level in lexicographic order.
    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, &d| acc * 3 + d as usize)
    }

    pub fn child(&self, digit: u8) -> Result<Self> {
        let mut word = self.0.clone();
        word.push(digit);
        Self::new(word)
    }

    pub fn children(&self) -> [Self; 3] {
        [0u8, 1, 2].map(|d| {
            let mut word = self.0.clone();
            word.push(d);
            Self(word)
        })
    }
}

impl fmt::Display for CellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("∅");
        }
        for d in &self.0 {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Measure of the cell `F_w(SG)` under the normalized self-similar measure.
pub fn cell_measure(address: &CellAddress) -> f64 {
    1.0 / 3f64.powi(address.level() as i32)
}

/// `μ(F_w(SG))` as the exact fraction `(1, 3^|w|)`, for words of length at most 40.
pub fn cell_measure_exact(address: &CellAddress) -> (u128, u128) {
    (1, 3u128.pow(address.level() as u32))
}

/// A point with coordinates `(x / 2^exp, y / 2^exp)` in the affine frame,
/// stored in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DyadicPoint {
    x: u64,
    y: u64,
    exp: u32,
}

impl DyadicPoint {
    pub fn new(x: u64, y: u64, exp: u32) -> Self {
        let mut p = Self { x, y, exp };
        while p.exp > 0 && p.x.is_multiple_of(2) && p.y.is_multiple_of(2) {
            p.x /= 2;
            p.y /= 2;
            p.exp -= 1;
        }
        p
    }

    /// Numerators and denominator exponent in lowest terms.
    pub fn parts(&self) -> (u64, u64, u32) {
        (self.x, self.y, self.exp)
    }

    /// The smallest level `m` with this point in `V_m`.
    pub fn birth_level(&self) -> usize {
        self.exp as usize
    }

    pub fn affine(&self) -> (f64, f64) {
        let d = (1u64 << self.exp) as f64;
        (self.x as f64 / d, self.y as f64 / d)
    }

    /// Cartesian view for an equilateral triangle of side 1 with `p0` at the origin.
    pub fn cartesian(&self) -> (f64, f64) {
        let (a, b) = self.affine();
        (a + 0.5 * b, b * 3f64.sqrt() / 2.0)
    }

    fn scaled(&self, exp: u32) -> (u64, u64) {
        let shift = exp - self.exp;
        (self.x << shift, self.y << shift)
    }
}

impl Ord for DyadicPoint {
    fn cmp(&self, other: &Self) -> Ordering {
        let exp = self.exp.max(other.exp);
        self.scaled(exp).cmp(&other.scaled(exp))
    }
}

impl PartialOrd for DyadicPoint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The vertex set `V_m` with adjacency and the full cell hierarchy.
///
/// Vertices are ordered by birth level, then lexicographically by exact
/// coordinates, so the vertices of `V_l` are the first `vertex_count(l)`
/// indices for every `l ≤ m`.
#[derive(Clone, Debug)]
pub struct VertexSet {
    level: usize,
    points: Vec<DyadicPoint>,
    boundary: [usize; 3],
    adjacency: Vec<Vec<usize>>,
    cells: Vec<Vec<[usize; 3]>>,
    weights: Vec<f64>,
}

/// Enumerates `V_m` with the default level cap.
pub fn enumerate_vertices(level: usize) -> Result<VertexSet> {
    enumerate_vertices_capped(level, DEFAULT_MAX_LEVEL)
}

pub fn enumerate_vertices_capped(level: usize, max_level: usize) -> Result<VertexSet> {
    if level > max_level {
        return Err(Error::Capacity {
            requested: level,
            max: max_level,
        });
    }
    VertexSet::build(level)
}

impl VertexSet {
    fn build(level: usize) -> Result<Self> {
        let scale = 1u64 << level;
        let mid = |a: (u64, u64), b: (u64, u64)| ((a.0 + b.0) / 2, (a.1 + b.1) / 2);

        // Corner k of child i is the midpoint of corners k and i of the parent.
        let mut coord_cells: Vec<Vec<[(u64, u64); 3]>> =
            vec![vec![[(0, 0), (scale, 0), (0, scale)]]];
        for _ in 0..level {
            let parent = coord_cells.last().expect("level 0 present");
            let mut next = Vec::with_capacity(parent.len() * 3);
            for c in parent {
                for i in 0..3 {
                    next.push([0, 1, 2].map(|k| mid(c[k], c[i])));
                }
            }
            coord_cells.push(next);
        }

        let mut points: Vec<DyadicPoint> = coord_cells[level]
            .iter()
            .flatten()
            .map(|&(x, y)| DyadicPoint::new(x, y, level as u32))
            .collect();
        points.sort_by(|a, b| a.exp.cmp(&b.exp).then_with(|| a.cmp(b)));
        points.dedup();
        if points.len() != vertex_count(level) {
            return Err(Error::Precondition(format!(
                "enumerated {} vertices at level {level}, expected {}",
                points.len(),
                vertex_count(level)
            )));
        }

        let index: HashMap<(u64, u64), usize> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.scaled(level as u32), i))
            .collect();
        let cells: Vec<Vec<[usize; 3]>> = coord_cells
            .iter()
            .map(|lvl| lvl.iter().map(|c| c.map(|p| index[&p])).collect())
            .collect();

        let n = points.len();
        let mut adjacency = vec![Vec::with_capacity(4); n];
        let mut counts = vec![0usize; n];
        for c in &cells[level] {
            for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                adjacency[c[a]].push(c[b]);
                adjacency[c[b]].push(c[a]);
            }
            for &v in c {
                counts[v] += 1;
            }
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        let denom = 3.0 * 3f64.powi(level as i32);
        let weights = counts.iter().map(|&c| c as f64 / denom).collect();
        let boundary = cells[0][0];

        Ok(Self {
            level,
            points,
            boundary,
            adjacency,
            cells,
            weights,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DyadicPoint] {
        &self.points
    }

    /// Indices of `p0`, `p1`, `p2`.
    pub fn boundary_ids(&self) -> [usize; 3] {
        self.boundary
    }

    pub fn is_boundary(&self, vertex: usize) -> bool {
        self.boundary.contains(&vertex)
    }

    pub fn neighbors(&self, vertex: usize) -> &[usize] {
        &self.adjacency[vertex]
    }

    pub fn degree(&self, vertex: usize) -> usize {
        self.adjacency[vertex].len()
    }

    /// Corner indices `(F_w p0, F_w p1, F_w p2)` of every cell of `level ≤ m`,
    /// in lexicographic word order.
    pub fn cells(&self, level: usize) -> &[[usize; 3]] {
        &self.cells[level]
    }

    pub fn cell_corners(&self, address: &CellAddress) -> Result<[usize; 3]> {
        if address.level() > self.level {
            return Err(Error::LevelMismatch {
                expected: self.level,
                found: address.level(),
            });
        }
        Ok(self.cells[address.level()][address.index()])
    }

    /// Index of the vertex at the given point, if it belongs to `V_m`.
    pub fn find(&self, point: &DyadicPoint) -> Option<usize> {
        if point.exp as usize > self.level {
            return None;
        }
        let start = match point.exp {
            0 => 0,
            e => vertex_count(e as usize - 1),
        };
        let end = vertex_count(point.exp as usize);
        self.points[start..end]
            .binary_search(point)
            .ok()
            .map(|i| i + start)
    }

    /// Quadrature weights: level-`m` cells incident to each vertex over `3·3^m`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `V_m \ V_0` with the two level-`m` cells meeting at each vertex.
    pub fn junction_points(&self) -> Result<Vec<Junction>> {
        if self.level == 0 {
            return Err(Error::NoJunctions);
        }
        let mut incident: Vec<Vec<usize>> = vec![Vec::with_capacity(2); self.len()];
        for (ci, c) in self.cells[self.level].iter().enumerate() {
            for &v in c {
                incident[v].push(ci);
            }
        }
        Ok((3..self.len())
            .map(|v| {
                let [a, b] = [incident[v][0], incident[v][1]];
                Junction {
                    vertex: v,
                    cells: [
                        CellAddress::from_index(self.level, a),
                        CellAddress::from_index(self.level, b),
                    ],
                }
            })
            .collect())
    }

    pub(crate) fn check_function(&self, f: &GraphFunction) -> Result<()> {
        if f.level() != self.level {
            return Err(Error::LevelMismatch {
                expected: self.level,
                found: f.level(),
            });
        }
        Ok(())
    }
}

/// A vertex of `V_m \ V_0` and the two cells of level `m` that share it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Junction {
    pub vertex: usize,
    pub cells: [CellAddress; 2],
}

/// Corner-average quadrature of `f` against the self-similar measure.
pub fn integrate(f: &GraphFunction, vertices: &VertexSet) -> Result<Complex64> {
    vertices.check_function(f)?;
    Ok(f.values()
        .iter()
        .zip(vertices.weights())
        .map(|(v, w)| v * w)
        .sum())
}

/// Real-valued quadrature in fixed index order.
pub(crate) fn integrate_real(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| v * w).sum()
}

/// Total measure of level-`m` cells on which `|f|` exceeds `threshold` at some corner.
///
/// `None` selects the default threshold `1e-12 · max|f|`.
pub fn support_measure(
    f: &GraphFunction,
    vertices: &VertexSet,
    threshold: Option<f64>,
) -> Result<f64> {
    vertices.check_function(f)?;
    let threshold = threshold
        .unwrap_or_else(|| 1e-12 * f.values().iter().map(|v| v.norm()).fold(0.0, f64::max));
    let active = vertices
        .cells(vertices.level())
        .iter()
        .filter(|c| c.iter().any(|&v| f.values()[v].norm() > threshold))
        .count();
    Ok(active as f64 * 3f64.powi(-(vertices.level() as i32)))
}
