use faer::{Mat, Side};
use num_complex::Complex64;

use super::BoundaryCondition;
use crate::calculus::GraphFunction;
use crate::error::{Error, Result};
use crate::geometry::{vertex_count, VertexSet};

/// `(−Δ_l u)(x) = Σ_{y~x} (u(x) − u(y))` over the level-`level` graph, all rows.
///
/// Every edge of the level-`l` graph is a side of exactly one level-`l` cell.
pub(crate) fn neg_laplacian_rows(vertices: &VertexSet, level: usize, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; vertex_count(level)];
    for c in vertices.cells(level) {
        for (a, b) in [(c[0], c[1]), (c[0], c[2]), (c[1], c[2])] {
            let d = u[a] - u[b];
            out[a] += d;
            out[b] -= d;
        }
    }
    out
}

/// `−Δ_l` for the boundary condition, acting on real values of length `|V_l|`.
///
/// Dirichlet clamps boundary values to zero and returns zero boundary rows.
/// The weighted variant scales boundary rows by `4/deg = 2`, which makes the
/// operator symmetric in the quadrature inner product.
pub(crate) fn neg_operator(
    vertices: &VertexSet,
    level: usize,
    bc: BoundaryCondition,
    weighted: bool,
    u: &[f64],
) -> Vec<f64> {
    let boundary = vertices.boundary_ids();
    match bc {
        BoundaryCondition::Dirichlet => {
            let mut clamped = u[..vertex_count(level)].to_vec();
            for b in boundary {
                clamped[b] = 0.0;
            }
            let mut out = neg_laplacian_rows(vertices, level, &clamped);
            for b in boundary {
                out[b] = 0.0;
            }
            out
        }
        BoundaryCondition::Neumann => {
            let mut out = neg_laplacian_rows(vertices, level, u);
            if weighted {
                for b in boundary {
                    out[b] *= 2.0;
                }
            }
            out
        }
    }
}

fn apply_complex(
    u: &GraphFunction,
    vertices: &VertexSet,
    bc: BoundaryCondition,
    weighted: bool,
) -> Result<GraphFunction> {
    if u.level() > vertices.level() {
        return Err(Error::LevelMismatch {
            expected: vertices.level(),
            found: u.level(),
        });
    }
    let (re, im) = u.split();
    let re = neg_operator(vertices, u.level(), bc, weighted, &re);
    let im = neg_operator(vertices, u.level(), bc, weighted, &im);
    let values = re
        .iter()
        .zip(&im)
        .map(|(&a, &b)| -Complex64::new(a, b))
        .collect();
    GraphFunction::new(u.level(), values)
}

/// `Δ_m u` at the level of `u`, with `Δ_m u(x) = Σ_{y~x}(u(y) − u(x))`.
///
/// Dirichlet treats boundary values as zero and leaves boundary rows at zero.
pub fn graph_laplacian_apply(
    u: &GraphFunction,
    vertices: &VertexSet,
    bc: BoundaryCondition,
) -> Result<GraphFunction> {
    apply_complex(u, vertices, bc, false)
}

/// Like [`graph_laplacian_apply`], with Neumann boundary rows scaled by `4/deg`.
pub fn weighted_laplacian_apply(
    u: &GraphFunction,
    vertices: &VertexSet,
    bc: BoundaryCondition,
) -> Result<GraphFunction> {
    apply_complex(u, vertices, bc, true)
}

/// `E_m(u) = ½ Σ_edges |u(q) − u(p)|²` on `V_m`, optionally times `(5/3)^m`.
///
/// `u` may live on any level at or above `level`; only its `V_m` prefix is read.
pub fn graph_energy(
    u: &GraphFunction,
    level: usize,
    vertices: &VertexSet,
    renormalized: bool,
) -> Result<f64> {
    if level > u.level() || level > vertices.level() {
        return Err(Error::LevelMismatch {
            expected: u.level().min(vertices.level()),
            found: level,
        });
    }
    let v = u.values();
    let mut sum = 0.0;
    for c in vertices.cells(level) {
        for (a, b) in [(c[0], c[1]), (c[0], c[2]), (c[1], c[2])] {
            sum += (v[a] - v[b]).norm_sqr();
        }
    }
    let energy = 0.5 * sum;
    Ok(if renormalized {
        energy * (5.0f64 / 3.0).powi(level as i32)
    } else {
        energy
    })
}

/// Full ascending spectrum of a graph operator at the level of a vertex set.
#[derive(Clone, Debug)]
pub struct GraphSpectrum {
    pub level: usize,
    pub bc: BoundaryCondition,
    pub values: Vec<f64>,
    /// Eigenvectors over all of `V_m`; Dirichlet vectors vanish on `V_0`.
    pub vectors: Vec<Vec<f64>>,
}

/// Spectrum of `−Δ_m` with counting-orthonormal eigenvectors.
pub fn graph_spectrum(vertices: &VertexSet, bc: BoundaryCondition) -> Result<GraphSpectrum> {
    solve(vertices, bc, false)
}

/// Spectrum of the weighted operator; eigenvectors are orthonormal for the
/// diagonal inner product with boundary weight 1/2 and interior weight 1.
pub fn weighted_graph_spectrum(
    vertices: &VertexSet,
    bc: BoundaryCondition,
) -> Result<GraphSpectrum> {
    solve(vertices, bc, true)
}

fn solve(vertices: &VertexSet, bc: BoundaryCondition, weighted: bool) -> Result<GraphSpectrum> {
    let n = vertices.len();
    let level = vertices.level();
    let active: Vec<usize> = match bc {
        BoundaryCondition::Dirichlet => (0..n).filter(|&v| !vertices.is_boundary(v)).collect(),
        BoundaryCondition::Neumann => (0..n).collect(),
    };
    let mut position = vec![usize::MAX; n];
    for (i, &v) in active.iter().enumerate() {
        position[v] = i;
    }
    // D^{-1/2} with D = diag(deg/4) symmetrizes the weighted operator.
    let scale: Vec<f64> = active
        .iter()
        .map(|&v| {
            if weighted {
                (4.0 / vertices.degree(v) as f64).sqrt()
            } else {
                1.0
            }
        })
        .collect();

    let dim = active.len();
    if dim == 0 {
        return Ok(GraphSpectrum {
            level,
            bc,
            values: Vec::new(),
            vectors: Vec::new(),
        });
    }
    let mut a = Mat::<f64>::zeros(dim, dim);
    for (i, &v) in active.iter().enumerate() {
        a.write(i, i, vertices.degree(v) as f64 * scale[i] * scale[i]);
        for &w in vertices.neighbors(v) {
            let j = position[w];
            if j != usize::MAX {
                a.write(i, j, -scale[i] * scale[j]);
            }
        }
    }
    let eig = a.selfadjoint_eigendecomposition(Side::Lower);
    let s = eig.s().column_vector();
    let q = eig.u();

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&x, &y| s.read(x).total_cmp(&s.read(y)));
    let mut values = Vec::with_capacity(dim);
    let mut vectors = Vec::with_capacity(dim);
    for k in order {
        let lambda = s.read(k);
        if !lambda.is_finite() {
            return Err(Error::Eigensolver(format!(
                "non-finite eigenvalue at level {level} ({bc})"
            )));
        }
        let mut vec = vec![0.0; n];
        for (i, &v) in active.iter().enumerate() {
            vec[v] = q.read(i, k) * scale[i];
        }
        if vec.iter().any(|x| !x.is_finite()) {
            return Err(Error::Eigensolver(format!(
                "non-finite eigenvector at level {level} ({bc})"
            )));
        }
        // Sign convention: the first entry of largest magnitude is positive.
        let peak = vec.iter().copied().fold(0.0f64, |m, x| m.max(x.abs()));
        if let Some(first) = vec.iter().find(|x| x.abs() >= peak * (1.0 - 1e-9)) {
            if *first < 0.0 {
                vec.iter_mut().for_each(|x| *x = -*x);
            }
        }
        values.push(lambda);
        vectors.push(vec);
    }
    Ok(GraphSpectrum {
        level,
        bc,
        values,
        vectors,
    })
}
