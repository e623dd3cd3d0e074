//! Spectral analysis and nonlinear Schrödinger dynamics on finite graph
//! approximations of the Sierpinski gasket.
//!
//! The crate is layered bottom-up:
//!
//! - [`geometry`]: cell addresses, vertex sets `V_m`, the self-similar measure and quadrature.
//! - [`spectral`]: graph Laplacians, spectral decimation, localized eigenfunctions and eigenbases.
//! - [`calculus`]: vertex/spectral transforms, `L^q`, `H^s` and dyadic-block functionals.
//! - [`dynamics`]: linear propagators, Duhamel integrals, the split-step NLS solver and
//!   finite-difference flow-map derivatives.
//! - [`experiments`]: batch drivers, basis cache persistence and report export.

pub mod calculus;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;
