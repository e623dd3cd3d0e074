//! Graph Laplacians, spectral decimation, localized eigenfunctions and eigenbases.
//!
//! Continuum eigenvalues use the normalization `Δ = (3/2) lim 5^m Δ_m` with
//! `μ(SG) = 1`.

mod basis;
mod decimation;
mod laplacian;
mod localized;

use serde::{Deserialize, Serialize};

pub use basis::{
    build_basis, build_basis_on, eigen_residual, graph_eigen_residual, BasisId, EigenBasis,
    EigenPair,
};
pub use decimation::{
    decimate_down, decimate_down_plus, decimate_up, extend_eigenfunction, is_forbidden,
    renormalize_eigenvalue, trace_birth, BranchValue, FORBIDDEN,
};
pub use laplacian::{
    graph_energy, graph_laplacian_apply, graph_spectrum, weighted_graph_spectrum,
    weighted_laplacian_apply, GraphSpectrum,
};
pub use localized::{
    build_localized, localized_seed, seed_residual, JunctionSite, LocalizedDescriptor, Seed,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
}

impl BoundaryCondition {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryCondition::Dirichlet => "dirichlet",
            BoundaryCondition::Neumann => "neumann",
        }
    }
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BoundaryCondition {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dirichlet" | "d" => Ok(BoundaryCondition::Dirichlet),
            "neumann" | "n" => Ok(BoundaryCondition::Neumann),
            other => Err(crate::Error::invalid(
                "bc",
                format!("unknown boundary condition `{other}`"),
            )),
        }
    }
}
