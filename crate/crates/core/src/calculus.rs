//! Vertex and spectral representations of functions, and the norms built on them.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{dims, integrate_real, vertex_count, VertexSet};
use crate::spectral::{renormalize_eigenvalue, BasisId, BoundaryCondition, EigenBasis};

/// Complex values on `V_M`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphFunction {
    level: usize,
    values: Vec<Complex64>,
}

impl GraphFunction {
    pub fn new(level: usize, values: Vec<Complex64>) -> Result<Self> {
        let expected = vertex_count(level);
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                level,
                expected,
                found: values.len(),
            });
        }
        Ok(Self { level, values })
    }

    /// Panics if the length does not match `|V_level|`.
    pub fn from_real(level: usize, values: Vec<f64>) -> Self {
        Self::new(
            level,
            values.into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
        )
        .expect("value count must match the vertex count")
    }

    pub fn zeros(level: usize) -> Self {
        Self::constant(level, Complex64::new(0.0, 0.0))
    }

    pub fn constant(level: usize, c: Complex64) -> Self {
        Self {
            level,
            values: vec![c; vertex_count(level)],
        }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn split(&self) -> (Vec<f64>, Vec<f64>) {
        self.values.iter().map(|v| (v.re, v.im)).unzip()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            level: self.level,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Coefficients of a function against an [`EigenBasis`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCoeffs {
    pub basis: BasisId,
    pub coeffs: Vec<Complex64>,
}

impl SpectralCoeffs {
    pub fn zeros(basis: &EigenBasis) -> Self {
        Self {
            basis: basis.id().clone(),
            coeffs: vec![Complex64::new(0.0, 0.0); basis.len()],
        }
    }

    /// The coefficient vector of the `index`-th basis element.
    pub fn unit(basis: &EigenBasis, index: usize) -> Self {
        let mut c = Self::zeros(basis);
        c.coeffs[index] = Complex64::new(1.0, 0.0);
        c
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Euclidean norm of the coefficients.
    pub fn l2(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn check(&self, basis: &EigenBasis) -> Result<()> {
        if &self.basis != basis.id() || self.coeffs.len() != basis.len() {
            return Err(Error::BasisMismatch(format!(
                "coefficients for level {} ({}) used with level {} ({})",
                self.basis.level,
                self.basis.bc,
                basis.level(),
                basis.bc()
            )));
        }
        Ok(())
    }
}

/// Regularity parameter of a spectral Sobolev norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SobolevParams {
    pub s: f64,
    pub bc: BoundaryCondition,
}

impl SobolevParams {
    pub fn new(s: f64, bc: BoundaryCondition) -> Result<Self> {
        if !(0.0..2.0).contains(&s) {
            return Err(Error::invalid("s", format!("{s} is outside [0, 2)")));
        }
        Ok(Self { s, bc })
    }

    /// Below `σ_∞` the space does not embed into continuous functions.
    pub fn sub_embedding(&self) -> bool {
        self.s < dims::sigma_infinity()
    }
}

/// `⟨f, φ_i⟩` for every basis element, by quadrature.
pub fn to_coeffs(f: &GraphFunction, basis: &EigenBasis) -> Result<SpectralCoeffs> {
    basis.vertices().check_function(f)?;
    let weighted: Vec<Complex64> = f
        .values()
        .iter()
        .zip(basis.vertices().weights())
        .map(|(v, w)| v * w)
        .collect();
    let coeffs = basis
        .pairs()
        .par_iter()
        .map(|p| {
            let (mut re, mut im) = (0.0, 0.0);
            for (v, phi) in weighted.iter().zip(&p.values) {
                re += v.re * phi;
                im += v.im * phi;
            }
            Complex64::new(re, im)
        })
        .collect();
    Ok(SpectralCoeffs {
        basis: basis.id().clone(),
        coeffs,
    })
}

/// `Σ_i c_i φ_i` on `V_M`.
pub fn from_coeffs(c: &SpectralCoeffs, basis: &EigenBasis) -> Result<GraphFunction> {
    c.check(basis)?;
    const CHUNK: usize = 256;
    let n = basis.vertices().len();
    let mut values = vec![Complex64::new(0.0, 0.0); n];
    values
        .par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(k, out)| {
            let start = k * CHUNK;
            for (coef, p) in c.coeffs.iter().zip(basis.pairs()) {
                if coef.re == 0.0 && coef.im == 0.0 {
                    continue;
                }
                for (o, phi) in out.iter_mut().zip(&p.values[start..]) {
                    o.re += coef.re * phi;
                    o.im += coef.im * phi;
                }
            }
        });
    GraphFunction::new(basis.level(), values)
}

/// `(∫|f|^q dμ)^{1/q}`; `q = ∞` gives the vertex maximum.
pub fn lq_norm(f: &GraphFunction, vertices: &VertexSet, q: f64) -> Result<f64> {
    if q.is_nan() || q <= 1.0 {
        return Err(Error::invalid("q", format!("{q} must exceed 1")));
    }
    vertices.check_function(f)?;
    if q.is_infinite() {
        return Ok(f.values().iter().map(|v| v.norm()).fold(0.0, f64::max));
    }
    let powers: Vec<f64> = f.values().iter().map(|v| v.norm().powf(q)).collect();
    Ok(integrate_real(&powers, vertices.weights()).powf(1.0 / q))
}

/// `(Σ_i (1+Λ_i)^s |c_i|²)^{1/2}`.
pub fn hs_norm(c: &SpectralCoeffs, basis: &EigenBasis, s: f64) -> Result<f64> {
    c.check(basis)?;
    if s.is_nan() || s < 0.0 {
        return Err(Error::invalid("s", format!("{s} must be nonnegative")));
    }
    Ok(c.coeffs
        .iter()
        .zip(basis.pairs())
        .map(|(c, p)| (1.0 + p.lambda).powf(s) * c.norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// `σ_q = (d_S/2)(1 − 2/q)`, the regularity at which `H^{σ_q}` embeds into `L^q`.
pub fn sigma_q(q: f64) -> Result<f64> {
    if !q.is_finite() || q <= 2.0 {
        return Err(Error::invalid(
            "q",
            format!("{q} must be a finite value above 2"),
        ));
    }
    Ok(dims::spectral() / 2.0 * (1.0 - 2.0 / q))
}

/// `|f|^{2k} f` pointwise.
pub fn pointwise_power(f: &GraphFunction, k: u32) -> GraphFunction {
    f.map(|v| v * v.norm_sqr().powi(k as i32))
}

/// `N_j = (3^{j+1} − 3)/2`, the Dirichlet dimension at level `j`.
pub fn dyadic_bound(j: usize) -> usize {
    (3usize.pow(j as u32 + 1) - 3) / 2
}

fn window(j: usize, size: usize) -> Result<(usize, usize)> {
    if j == 0 {
        return Err(Error::invalid("j", "dyadic blocks start at j = 1"));
    }
    let (lo, hi) = (dyadic_bound(j - 1), dyadic_bound(j));
    if hi > size {
        return Err(Error::WindowExceedsBasis { lo, hi, size });
    }
    Ok((lo, hi))
}

/// Keeps only the coefficients with index in `(N_{j−1}, N_j]` (one-based).
pub fn dyadic_project(c: &SpectralCoeffs, j: usize) -> Result<SpectralCoeffs> {
    if c.basis.bc != BoundaryCondition::Dirichlet {
        return Err(Error::invalid(
            "bc",
            "dyadic blocks use the Dirichlet basis",
        ));
    }
    let (lo, hi) = window(j, c.coeffs.len())?;
    let coeffs = c
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if (lo..hi).contains(&i) {
                v
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Ok(SpectralCoeffs {
        basis: c.basis.clone(),
        coeffs,
    })
}

/// `c_6 = Λ(ψ^{(2)}) / 25`.
pub fn localized_constant() -> Result<f64> {
    Ok(renormalize_eigenvalue(6.0, 2)? / 25.0)
}

/// Minimum and maximum of `Λ_k / (c_6 5^j)` over the `j`-th dyadic window.
pub fn dyadic_eigenvalue_check(basis: &EigenBasis, j: usize) -> Result<(f64, f64)> {
    if basis.bc() != BoundaryCondition::Dirichlet {
        return Err(Error::invalid(
            "bc",
            "dyadic blocks use the Dirichlet basis",
        ));
    }
    if j + 1 > basis.level() {
        return Err(Error::invalid(
            "j",
            format!("window {j} needs a basis of level at least {}", j + 1),
        ));
    }
    let (lo, hi) = window(j, basis.len())?;
    let reference = localized_constant()? * 5f64.powi(j as i32);
    Ok(basis.pairs()[lo..hi]
        .iter()
        .map(|p| p.lambda / reference)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
            (a.min(r), b.max(r))
        }))
}
