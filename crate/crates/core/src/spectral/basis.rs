use std::sync::Arc;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use super::decimation::{renormalize_eigenvalue, trace_birth};
use super::laplacian::{neg_operator, weighted_graph_spectrum, GraphSpectrum};
use super::localized::{build_localized, JunctionSite, LocalizedDescriptor};
use super::{graph_spectrum, BoundaryCondition};
use crate::calculus::GraphFunction;
use crate::error::{Error, Result};
use crate::geometry::{enumerate_vertices, integrate_real, VertexSet};

/// Graph eigenvalues closer than this belong to one eigenspace.
const GROUP_TOL: f64 = 1e-8;
/// Relative agreement required to place a localized function in an eigenspace.
const MATCH_TOL: f64 = 1e-8;

/// An eigenfunction with its continuum eigenvalue and decimation history.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    /// Continuum eigenvalue `Λ`.
    pub lambda: f64,
    /// Graph eigenvalues from `birth_level` up to `level`.
    pub graph_history: Vec<f64>,
    pub birth_level: usize,
    pub bc: BoundaryCondition,
    pub level: usize,
    /// Real vertex values on `V_level`.
    pub values: Vec<f64>,
    pub localized: Option<LocalizedDescriptor>,
}

impl EigenPair {
    /// Graph eigenvalue at the pair's own level.
    pub fn graph_eigenvalue(&self) -> f64 {
        *self.graph_history.last().expect("history is never empty")
    }

    pub fn to_graph_function(&self) -> GraphFunction {
        GraphFunction::from_real(self.level, self.values.clone())
    }
}

/// Identity of an eigenbasis carried by coefficient vectors.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BasisId {
    pub level: usize,
    pub bc: BoundaryCondition,
    pub fingerprint: Arc<str>,
}

/// An ordered orthonormal eigenbasis of `L²(μ)` restricted to `V_M`.
#[derive(Clone, Debug)]
pub struct EigenBasis {
    id: BasisId,
    vertices: Arc<VertexSet>,
    pairs: Vec<EigenPair>,
}

impl EigenBasis {
    /// Wraps pairs already in basis order, e.g. from a cache.
    pub fn from_pairs(
        vertices: Arc<VertexSet>,
        bc: BoundaryCondition,
        pairs: Vec<EigenPair>,
    ) -> Result<Self> {
        let level = vertices.level();
        if let Some(p) = pairs
            .iter()
            .find(|p| p.level != level || p.values.len() != vertices.len() || p.bc != bc)
        {
            return Err(Error::Precondition(format!(
                "pair at level {} ({}) with {} values does not fit a level-{level} {bc} basis",
                p.level,
                p.bc,
                p.values.len()
            )));
        }
        let fingerprint = fingerprint(level, bc, &pairs).into();
        Ok(Self {
            id: BasisId {
                level,
                bc,
                fingerprint,
            },
            vertices,
            pairs,
        })
    }

    pub fn id(&self) -> &BasisId {
        &self.id
    }

    pub fn level(&self) -> usize {
        self.id.level
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.id.bc
    }

    /// SHA-256 over level, boundary condition, eigenvalues and vertex values.
    pub fn fingerprint(&self) -> &str {
        &self.id.fingerprint
    }

    pub fn vertices(&self) -> &VertexSet {
        &self.vertices
    }

    pub fn shared_vertices(&self) -> Arc<VertexSet> {
        Arc::clone(&self.vertices)
    }

    pub fn pairs(&self) -> &[EigenPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }

    /// Index of `ψ^{(j)}`, if present.
    pub fn localized_index(&self, generation: usize) -> Option<usize> {
        self.pairs.iter().position(|p| {
            p.localized
                .as_ref()
                .is_some_and(|d| d.generation == generation)
        })
    }

    /// Index of a pair whose eigenvalue and values match bit for bit.
    pub fn index_of(&self, pair: &EigenPair) -> Option<usize> {
        self.pairs.iter().position(|p| {
            p.lambda.to_bits() == pair.lambda.to_bits()
                && p.values.len() == pair.values.len()
                && p.values
                    .iter()
                    .zip(&pair.values)
                    .all(|(a, b)| a.to_bits() == b.to_bits())
        })
    }
}

fn fingerprint(level: usize, bc: BoundaryCondition, pairs: &[EigenPair]) -> String {
    let mut h = Sha256::new();
    h.update((level as u64).to_le_bytes());
    h.update(bc.as_str().as_bytes());
    for p in pairs {
        h.update(p.lambda.to_bits().to_le_bytes());
        for v in &p.values {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds the level-`M` eigenbasis for the boundary condition.
pub fn build_basis(level: usize, bc: BoundaryCondition) -> Result<EigenBasis> {
    build_basis_on(Arc::new(enumerate_vertices(level)?), bc)
}

/// Builds the eigenbasis on an existing vertex set.
///
/// Each eigenspace is spanned by the localized member (if any) followed by
/// Gram-Schmidt over the eigenspace's reproducing kernels `K_x = Σ φ_i(x) φ_i`
/// in ascending vertex order. The result does not depend on the rotation the
/// eigensolver picks inside a degenerate eigenspace.
pub fn build_basis_on(vertices: Arc<VertexSet>, bc: BoundaryCondition) -> Result<EigenBasis> {
    let level = vertices.level();
    let spectrum = match bc {
        BoundaryCondition::Dirichlet => graph_spectrum(&vertices, bc)?,
        // Boundary rows weighted so the operator is symmetric in L²(μ).
        BoundaryCondition::Neumann => weighted_graph_spectrum(&vertices, bc)?,
    };
    let min_level = match bc {
        BoundaryCondition::Dirichlet => 1,
        BoundaryCondition::Neumann => 0,
    };
    let localized: Vec<EigenPair> = (2..=level)
        .map(|j| build_localized(j, JunctionSite::ALL[0], &vertices, bc))
        .collect::<Result<_>>()?;

    let mut groups = group_spectrum(spectrum, level)?;
    for psi in localized {
        let group = groups
            .iter_mut()
            .find(|g| (g.lambda - psi.lambda).abs() <= MATCH_TOL * psi.lambda)
            .ok_or_else(|| Error::Degeneracy {
                lambda: psi.lambda,
                detail: "no eigenspace matches a localized eigenvalue".into(),
            })?;
        group.localized.push(psi);
    }
    groups.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));

    let weights = vertices.weights();
    let mut pairs = Vec::with_capacity(vertices.len());
    for g in groups {
        let (birth_level, graph_history) = trace_birth(g.graph_eigenvalue, level, min_level);
        let lambda = g.lambda;
        let members = orthonormalize(&g, weights)?;
        for member in members {
            pairs.push(match member {
                Member::Localized(psi) => psi,
                Member::Combined(values) => EigenPair {
                    lambda,
                    graph_history: graph_history.clone(),
                    birth_level,
                    bc,
                    level,
                    values,
                    localized: None,
                },
            });
        }
    }
    EigenBasis::from_pairs(vertices, bc, pairs)
}

struct Group {
    graph_eigenvalue: f64,
    lambda: f64,
    /// Quadrature-orthonormal eigenvectors.
    vectors: Vec<Vec<f64>>,
    localized: Vec<EigenPair>,
}

fn group_spectrum(spectrum: GraphSpectrum, level: usize) -> Result<Vec<Group>> {
    // Counting- or D-orthonormal vectors become L²(μ)-orthonormal after this scale.
    let scale = (3f64.powi(level as i32 + 1) / 2.0).sqrt();
    let mut groups: Vec<Group> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (value, vec) in spectrum.values.into_iter().zip(spectrum.vectors) {
        // Solver noise around the exact values 0 and 6 is snapped away.
        let value = if value.abs() <= GROUP_TOL {
            0.0
        } else {
            value.clamp(0.0, 6.0)
        };
        if value - last > GROUP_TOL || groups.is_empty() {
            groups.push(Group {
                graph_eigenvalue: 0.0,
                lambda: 0.0,
                vectors: Vec::new(),
                localized: Vec::new(),
            });
            sums.push(0.0);
        }
        last = value;
        let g = groups.last_mut().expect("pushed above");
        g.vectors.push(vec.into_iter().map(|x| x * scale).collect());
        *sums.last_mut().expect("pushed above") += value;
    }
    for (g, sum) in groups.iter_mut().zip(sums) {
        g.graph_eigenvalue = sum / g.vectors.len() as f64;
        g.lambda = renormalize_eigenvalue(g.graph_eigenvalue, level)?;
    }
    Ok(groups)
}

enum Member {
    Localized(EigenPair),
    Combined(Vec<f64>),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormalizes one eigenspace in the coordinates of its eigensolver vectors.
fn orthonormalize(group: &Group, weights: &[f64]) -> Result<Vec<Member>> {
    let dim = group.vectors.len();
    let n = weights.len();
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(dim);
    let mut members: Vec<Option<EigenPair>> = Vec::with_capacity(dim);

    for psi in &group.localized {
        let weighted: Vec<f64> = psi.values.iter().zip(weights).map(|(v, w)| v * w).collect();
        let coords: Vec<f64> = group.vectors.iter().map(|v| dot(v, &weighted)).collect();
        let captured = dot(&coords, &coords).sqrt();
        if (captured - 1.0).abs() > 1e-6 {
            return Err(Error::Degeneracy {
                lambda: group.lambda,
                detail: format!("localized member lies {captured} inside its eigenspace"),
            });
        }
        let q = reduce(&coords, &accepted)
            .filter(|(_, r)| *r > 0.5)
            .ok_or_else(|| Error::Degeneracy {
                lambda: group.lambda,
                detail: "localized members are linearly dependent".into(),
            })?
            .0;
        accepted.push(q);
        members.push(Some(psi.clone()));
    }

    let kernels: Vec<Vec<f64>> = (0..n)
        .map(|x| group.vectors.iter().map(|v| v[x]).collect())
        .collect();
    let peak = kernels.iter().map(|k| dot(k, k)).fold(0.0, f64::max).sqrt();
    let mut used = vec![false; n];
    for threshold in [0.1, 1e-6] {
        for (x, k) in kernels.iter().enumerate() {
            if accepted.len() == dim {
                break;
            }
            if used[x] || dot(k, k).sqrt() <= 1e-10 * peak {
                continue;
            }
            if let Some((q, _)) = reduce(k, &accepted).filter(|(_, r)| *r >= threshold) {
                accepted.push(q);
                members.push(None);
                used[x] = true;
            }
        }
    }
    if accepted.len() != dim {
        return Err(Error::Degeneracy {
            lambda: group.lambda,
            detail: format!("spanned {} of {dim} dimensions", accepted.len()),
        });
    }

    Ok(accepted
        .into_iter()
        .zip(members)
        .map(|(q, m)| match m {
            Some(psi) => Member::Localized(psi),
            None => {
                let mut values = vec![0.0; n];
                for (c, v) in q.iter().zip(&group.vectors) {
                    values.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
                }
                Member::Combined(values)
            }
        })
        .collect())
}

/// Two-pass Gram-Schmidt of `candidate` against orthonormal `basis`.
/// Returns the normalized remainder and its norm relative to the candidate.
fn reduce(candidate: &[f64], basis: &[Vec<f64>]) -> Option<(Vec<f64>, f64)> {
    let norm = dot(candidate, candidate).sqrt();
    if norm == 0.0 {
        return None;
    }
    let mut r = candidate.to_vec();
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, &r);
            r.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
    let rest = dot(&r, &r).sqrt();
    if rest == 0.0 {
        return None;
    }
    r.iter_mut().for_each(|x| *x /= rest);
    Some((r, rest / norm))
}

fn residual_with(
    pair: &EigenPair,
    vertices: &VertexSet,
    multiplier: f64,
    eigenvalue: f64,
) -> Result<f64> {
    if pair.level != vertices.level() {
        return Err(Error::LevelMismatch {
            expected: vertices.level(),
            found: pair.level,
        });
    }
    let weighted = pair.bc == BoundaryCondition::Neumann;
    let op = neg_operator(vertices, pair.level, pair.bc, weighted, &pair.values);
    let r: Vec<f64> = op
        .iter()
        .zip(&pair.values)
        .map(|(l, u)| (multiplier * l - eigenvalue * u).powi(2))
        .collect();
    let num = integrate_real(&r, vertices.weights()).sqrt();
    let sq: Vec<f64> = pair.values.iter().map(|u| u * u).collect();
    let norm = integrate_real(&sq, vertices.weights()).sqrt();
    Ok(if eigenvalue == 0.0 {
        num / norm
    } else {
        num / (eigenvalue * norm)
    })
}

/// `‖(3/2)5^M(−Δ_M)u − Λu‖ / (Λ‖u‖)` in `L²(μ)`; absolute when `Λ = 0`.
pub fn eigen_residual(pair: &EigenPair, vertices: &VertexSet) -> Result<f64> {
    residual_with(
        pair,
        vertices,
        1.5 * 5f64.powi(pair.level as i32),
        pair.lambda,
    )
}

/// The same residual for the exact graph equation `−Δ_M u = λ_M u`.
pub fn graph_eigen_residual(pair: &EigenPair, vertices: &VertexSet) -> Result<f64> {
    residual_with(pair, vertices, 1.0, pair.graph_eigenvalue())
}

impl EigenBasis {
    /// Largest deviation of the quadrature Gram matrix from the identity.
    pub fn gram_deviation(&self) -> f64 {
        let w = self.vertices.weights();
        let weighted: Vec<Vec<f64>> = self
            .pairs
            .iter()
            .map(|p| p.values.iter().zip(w).map(|(v, x)| v * x).collect())
            .collect();
        let mut worst = 0.0f64;
        for (i, wi) in weighted.iter().enumerate() {
            for (j, pj) in self.pairs.iter().enumerate().skip(i) {
                let g = dot(wi, &pj.values);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    /// Wraps vertex values of a basis element as a complex graph function.
    pub fn function(&self, index: usize) -> GraphFunction {
        GraphFunction::new(
            self.level(),
            self.pairs[index]
                .values
                .iter()
                .map(|&x| Complex64::new(x, 0.0))
                .collect(),
        )
        .expect("basis values match the vertex count")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_basis_counts() {
        let d = build_basis(2, BoundaryCondition::Dirichlet).unwrap();
        assert_eq!(d.len(), 12);
        let n = build_basis(2, BoundaryCondition::Neumann).unwrap();
        assert_eq!(n.len(), 15);
        assert_eq!(n.pairs()[0].lambda, 0.0);
    }

    #[test]
    fn small_basis_is_orthonormal_and_sorted() {
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann] {
            let b = build_basis(4, bc).unwrap();
            assert!(b.gram_deviation() < 1e-10, "{bc}: {}", b.gram_deviation());
            assert!(b
                .pairs()
                .windows(2)
                .all(|w| w[0].lambda <= w[1].lambda * (1.0 + 1e-12)));
            for p in b.pairs() {
                assert!(graph_eigen_residual(p, b.vertices()).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn localized_members_are_unchanged() {
        let b = build_basis(4, BoundaryCondition::Dirichlet).unwrap();
        for j in 2..=4 {
            let idx = b.localized_index(j).unwrap();
            let fresh = build_localized(
                j,
                JunctionSite::ALL[0],
                b.vertices(),
                BoundaryCondition::Dirichlet,
            )
            .unwrap();
            assert_eq!(b.index_of(&fresh), Some(idx));
            assert_eq!(b.pairs()[idx], fresh);
        }
    }

    #[test]
    fn neumann_constant_has_zero_residual() {
        let b = build_basis(3, BoundaryCondition::Neumann).unwrap();
        let c = &b.pairs()[0];
        assert!(c.values.iter().all(|v| (v - c.values[0]).abs() < 1e-12));
        assert!(eigen_residual(c, b.vertices()).unwrap() < 1e-12);
    }

    #[test]
    fn basis_is_deterministic() {
        let a = build_basis(3, BoundaryCondition::Dirichlet).unwrap();
        let b = build_basis(3, BoundaryCondition::Dirichlet).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
    }
}
