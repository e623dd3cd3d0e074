use super::basis::EigenPair;
use super::decimation::{decimate_down, eigen_defect, extend_real, renormalize_eigenvalue};
use super::laplacian::neg_operator;
use super::BoundaryCondition;
use crate::error::{Error, Result};
use crate::geometry::{integrate_real, vertex_count, CellAddress, VertexSet};

const SEED_TOL: f64 = 1e-12;

/// A point of `V_1 \ V_0`: the midpoint `F_a(p_b) = F_b(p_a)` with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JunctionSite {
    a: u8,
    b: u8,
}

impl JunctionSite {
    pub const ALL: [JunctionSite; 3] = [
        JunctionSite { a: 0, b: 1 },
        JunctionSite { a: 0, b: 2 },
        JunctionSite { a: 1, b: 2 },
    ];

    pub fn new(a: u8, b: u8) -> Result<Self> {
        let (a, b) = (a.min(b), a.max(b));
        if a == b || b > 2 {
            return Err(Error::invalid(
                "junction",
                format!("({a}, {b}) is not a pair of distinct corners"),
            ));
        }
        Ok(Self { a, b })
    }

    pub fn corners(&self) -> (u8, u8) {
        (self.a, self.b)
    }

    pub fn index(&self) -> usize {
        (self.a + self.b - 1) as usize
    }

    /// The two depth-`(j−1)` cells meeting at the copy of this site used by `ψ^{(j)}`:
    /// `a b^{j−2}` and `b a^{j−2}`.
    pub fn cell_pair(&self, generation: usize) -> [CellAddress; 2] {
        let tail = generation.saturating_sub(2);
        let mut w = vec![self.a];
        w.extend(std::iter::repeat_n(self.b, tail));
        let mut w2 = vec![self.b];
        w2.extend(std::iter::repeat_n(self.a, tail));
        [
            CellAddress::new(w).expect("digits < 3"),
            CellAddress::new(w2).expect("digits < 3"),
        ]
    }
}

impl std::fmt::Display for JunctionSite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.a, self.b)
    }
}

/// Identifies a localized eigenfunction `ψ^{(j)}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalizedDescriptor {
    pub generation: usize,
    pub site: JunctionSite,
    pub cells: [CellAddress; 2],
}

/// Level-`j` seed values and where they live.
#[derive(Clone, Debug)]
pub struct Seed {
    pub level: usize,
    pub values: Vec<f64>,
    pub junction: usize,
    pub cells: [CellAddress; 2],
}

/// The level-`j` graph eigenfunction with eigenvalue 6 supported on two cells
/// of depth `j−1`: 2 at the junction, −1 at its four neighbors inside the
/// cells, +1 at the far midpoint of each cell.
pub fn localized_seed(generation: usize, site: JunctionSite, vertices: &VertexSet) -> Result<Seed> {
    if generation < 2 {
        return Err(Error::invalid(
            "j",
            format!("generation {generation} must be at least 2"),
        ));
    }
    if vertices.level() < generation {
        return Err(Error::LevelMismatch {
            expected: generation,
            found: vertices.level(),
        });
    }
    let cells = site.cell_pair(generation);
    let corners = [
        vertices.cell_corners(&cells[0])?,
        vertices.cell_corners(&cells[1])?,
    ];
    let junction = *corners[0]
        .iter()
        .find(|v| corners[1].contains(v))
        .ok_or_else(|| Error::Precondition("seed cells do not share a corner".into()))?;

    let fine = vertices.cells(generation);
    let mut values = vec![0.0; vertex_count(generation)];
    values[junction] = 2.0;
    for (address, c) in cells.iter().zip(&corners) {
        let base = 3 * address.index();
        let at = c
            .iter()
            .position(|&v| v == junction)
            .expect("junction is a corner");
        let others: Vec<usize> = (0..3).filter(|&k| k != at).collect();
        // Corner k of child i is the midpoint of corners i and k.
        for &k in &others {
            values[fine[base + at][k]] = -1.0;
        }
        values[fine[base + others[0]][others[1]]] = 1.0;
    }
    Ok(Seed {
        level: generation,
        values,
        junction,
        cells,
    })
}

/// Largest seed defect over the Dirichlet and Neumann operators at eigenvalue 6.
pub fn seed_residual(seed: &Seed, vertices: &VertexSet) -> f64 {
    [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann]
        .iter()
        .map(|&bc| {
            neg_operator(vertices, seed.level, bc, false, &seed.values)
                .iter()
                .zip(&seed.values)
                .map(|(r, u)| (r - 6.0 * u).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Builds `ψ^{(j)}` at the level of `vertices`, normalized in `L²(μ)`.
pub fn build_localized(
    generation: usize,
    site: JunctionSite,
    vertices: &VertexSet,
    bc: BoundaryCondition,
) -> Result<EigenPair> {
    let seed = localized_seed(generation, site, vertices)?;
    let residual = seed_residual(&seed, vertices);
    if residual > SEED_TOL {
        return Err(Error::SeedResidual {
            residual,
            tolerance: SEED_TOL,
        });
    }

    let mut history = vec![6.0];
    let mut values = seed.values.clone();
    for level in generation..vertices.level() {
        // The minus root of 6 is the forbidden value 2, so the first step takes 3.
        let next = if level == generation {
            3.0
        } else {
            decimate_down(*history.last().expect("nonempty"))?.value
        };
        values = extend_real(vertices, level, &values, next);
        history.push(next);
    }
    let top = *history.last().expect("nonempty");
    let defect = eigen_defect(vertices, vertices.level(), &values, top);
    if defect > 1e-10 * values.iter().fold(0.0f64, |m, x| m.max(x.abs())) {
        return Err(Error::Precondition(format!(
            "extended seed defect {defect:e} at level {}",
            vertices.level()
        )));
    }

    let norm = integrate_real(
        &values.iter().map(|x| x * x).collect::<Vec<_>>(),
        vertices.weights(),
    )
    .sqrt();
    values.iter_mut().for_each(|x| *x /= norm);

    Ok(EigenPair {
        lambda: renormalize_eigenvalue(6.0, generation)?,
        graph_history: history,
        birth_level: generation,
        bc,
        level: vertices.level(),
        values,
        localized: Some(LocalizedDescriptor {
            generation,
            site,
            cells: seed.cells,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{enumerate_vertices, support_measure, DyadicPoint};

    #[test]
    fn seed_has_expected_pattern() {
        let vs = enumerate_vertices(4).unwrap();
        for site in JunctionSite::ALL {
            for j in 2..=4 {
                let seed = localized_seed(j, site, &vs).unwrap();
                assert!(seed_residual(&seed, &vs) <= SEED_TOL);
                let count = |x: f64| seed.values.iter().filter(|&&v| v == x).count();
                assert_eq!((count(2.0), count(-1.0), count(1.0)), (1, 4, 2));
            }
        }
    }

    #[test]
    fn level_two_seed_sits_at_edge_midpoint() {
        let vs = enumerate_vertices(2).unwrap();
        let seed = localized_seed(2, JunctionSite::new(1, 0).unwrap(), &vs).unwrap();
        assert_eq!(vs.points()[seed.junction], DyadicPoint::new(1, 0, 1));
    }

    #[test]
    fn localized_support_and_norm() {
        let vs = enumerate_vertices(5).unwrap();
        for j in 2..=5 {
            let psi = build_localized(j, JunctionSite::ALL[0], &vs, BoundaryCondition::Dirichlet)
                .unwrap();
            let f = psi.to_graph_function();
            let norm: f64 = psi
                .values
                .iter()
                .zip(vs.weights())
                .map(|(v, w)| v * v * w)
                .sum();
            assert!((norm - 1.0).abs() < 1e-14);
            let supp = support_measure(&f, &vs, None).unwrap();
            // Count level-5 cells to compare the bounds exactly.
            let cells = (supp * 243.0).round() as usize;
            assert!((cells as f64 / 243.0 - supp).abs() < 1e-12);
            let lo = 2 * 3usize.pow(5 - j as u32);
            assert!(cells >= lo && cells <= 3 * lo, "j={j}: {cells} cells");
        }
    }

    #[test]
    fn rejects_bad_requests() {
        let vs = enumerate_vertices(3).unwrap();
        assert!(localized_seed(1, JunctionSite::ALL[0], &vs).is_err());
        assert!(matches!(
            localized_seed(4, JunctionSite::ALL[0], &vs),
            Err(Error::LevelMismatch { .. })
        ));
        assert!(JunctionSite::new(1, 1).is_err());
    }
}
