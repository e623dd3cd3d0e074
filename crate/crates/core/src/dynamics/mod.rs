//! Propagators, Duhamel integrals, the split-step NLS solver and flow-map derivatives.
//!
//! The Schrödinger group multiplies each coefficient by `e^{−iΛt}`.

mod nls;
pub mod quadrature;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::calculus::{from_coeffs, hs_norm, lq_norm, pointwise_power, to_coeffs, SpectralCoeffs};
use crate::error::{Error, Result};
use crate::geometry::integrate_real;
use crate::spectral::{EigenBasis, EigenPair};

pub use nls::{default_fd_step, gamma_derivative_fd, nls_solve, NlsConfig, Trajectory};

/// Relative eigenvalue gap below which the Duhamel kernel takes its resonant form.
pub const RESONANCE_TOL: f64 = 1e-9;

/// Gauss–Legendre order of the composite time rules.
pub const TIME_RULE_ORDER: usize = 8;

fn multiply(
    c: &SpectralCoeffs,
    basis: &EigenBasis,
    factor: impl Fn(f64) -> Complex64 + Sync,
) -> Result<SpectralCoeffs> {
    c.check(basis)?;
    let coeffs = c
        .coeffs
        .par_iter()
        .zip(basis.pairs())
        .map(|(v, p)| v * factor(p.lambda))
        .collect();
    Ok(SpectralCoeffs {
        basis: c.basis.clone(),
        coeffs,
    })
}

/// `e^{−itλ}` with the rounding error of `tλ` folded back in. At `λ ~ 10⁵` the
/// plain product loses about `λ·ε ≈ 10⁻¹¹` of phase, enough to break the group law.
fn phase(t: f64, lambda: f64) -> Complex64 {
    let p = t * lambda;
    let err = t.mul_add(lambda, -p);
    Complex64::from_polar(1.0, -p) * Complex64::new(1.0, -err)
}

/// `S_t c`: each coefficient times `e^{−itΛ}`.
pub fn propagate(c: &SpectralCoeffs, basis: &EigenBasis, t: f64) -> Result<SpectralCoeffs> {
    multiply(c, basis, |lambda| phase(t, lambda))
}

/// `P_t c`: each coefficient times `e^{−tΛ}`.
pub fn heat_propagate(c: &SpectralCoeffs, basis: &EigenBasis, t: f64) -> Result<SpectralCoeffs> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::invalid(
            "t",
            format!("heat time {t} must be nonnegative"),
        ));
    }
    multiply(c, basis, |lambda| Complex64::new((-t * lambda).exp(), 0.0))
}

/// `∫₀^t e^{−i(t−τ)λ_tgt} e^{−iτλ_src} dτ` in closed form.
pub fn duhamel_kernel(t: f64, lambda_src: f64, lambda_tgt: f64) -> Complex64 {
    let delta = lambda_src - lambda_tgt;
    let phase = Complex64::from_polar(1.0, -0.5 * t * (lambda_src + lambda_tgt));
    if delta.abs() <= RESONANCE_TOL * lambda_src.abs().max(1.0) {
        phase * t
    } else {
        phase * (2.0 * (0.5 * delta * t).sin() / delta)
    }
}

/// `H^s` norm of a Duhamel integral next to its resonant lower bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SobolevTerm {
    pub s: f64,
    pub full: f64,
    pub resonant: f64,
}

#[derive(Clone, Debug)]
pub struct DuhamelResult {
    pub coeffs: SpectralCoeffs,
    pub source_index: usize,
    pub terms: Vec<SobolevTerm>,
}

/// `∫₀^t S_{t−τ}(|S_τψ|^{2k} S_τψ) dτ` for a real eigenfunction `ψ` of the basis.
pub fn duhamel_of_eigenfunction(
    psi: &EigenPair,
    k: u32,
    t: f64,
    basis: &EigenBasis,
    s_list: &[f64],
) -> Result<DuhamelResult> {
    let source_index = basis.index_of(psi).ok_or(Error::NotInBasis)?;
    let f = basis.function(source_index);
    let source = to_coeffs(&pointwise_power(&f, k), basis)?;
    let coeffs = source
        .coeffs
        .par_iter()
        .zip(basis.pairs())
        .map(|(c, p)| c * duhamel_kernel(t, psi.lambda, p.lambda))
        .collect();
    let coeffs = SpectralCoeffs {
        basis: basis.id().clone(),
        coeffs,
    };
    let moment = lq_norm(&f, basis.vertices(), (2 * k + 2) as f64)?.powi(2 * k as i32 + 2);
    let terms = s_list
        .iter()
        .map(|&s| {
            Ok(SobolevTerm {
                s,
                full: hs_norm(&coeffs, basis, s)?,
                resonant: t * (1.0 + psi.lambda).powf(s / 2.0) * moment,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DuhamelResult {
        coeffs,
        source_index,
        terms,
    })
}

/// How [`map_derivative`] evaluates the top-order Duhamel integral.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DuhamelRoute {
    /// Closed form when the data is a real multiple of one basis element, quadrature otherwise.
    Auto,
    /// Composite Gauss–Legendre time quadrature with the given panel count,
    /// or the count that resolves the fastest phase.
    Quadrature(Option<usize>),
}

/// Panel count that resolves phases up to `max_frequency` over `[0, t]`.
pub fn default_panels(t: f64, max_frequency: f64) -> usize {
    ((8.0 * t * max_frequency / std::f64::consts::TAU).ceil() as usize).max(32)
}

/// Single real basis element carrying all of the data, if any.
fn as_eigenfunction(u0: &SpectralCoeffs) -> Option<(usize, f64)> {
    let mut found = None;
    for (i, c) in u0.coeffs.iter().enumerate() {
        if c.re == 0.0 && c.im == 0.0 {
            continue;
        }
        if found.is_some() || c.im != 0.0 {
            return None;
        }
        found = Some((i, c.re));
    }
    found
}

/// `∫₀^t S_{t−τ}(|S_τ u0|^{2k} S_τ u0) dτ` by time quadrature of the integrand
/// synthesized on the vertices.
pub fn duhamel_by_quadrature(
    u0: &SpectralCoeffs,
    k: u32,
    t: f64,
    basis: &EigenBasis,
    panels: Option<usize>,
) -> Result<SpectralCoeffs> {
    u0.check(basis)?;
    let top = basis.pairs().iter().map(|p| p.lambda).fold(0.0, f64::max);
    let panels = panels.unwrap_or_else(|| default_panels(t, top));
    let mut acc = SpectralCoeffs::zeros(basis);
    for (tau, w) in quadrature::composite(0.0, t, panels, TIME_RULE_ORDER) {
        let state = from_coeffs(&propagate(u0, basis, tau)?, basis)?;
        let nonlinear = to_coeffs(&pointwise_power(&state, k), basis)?;
        let back = propagate(&nonlinear, basis, t - tau)?;
        acc.coeffs
            .iter_mut()
            .zip(&back.coeffs)
            .for_each(|(a, b)| *a += b * w);
    }
    Ok(acc)
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `∂_γ^m u(γ, t)` at `γ = 0` for `i∂_t u + Δu = μ|u|^{2k}u` with data `γ u0`.
///
/// Orders strictly between 1 and `2k+1` vanish; the top order is
/// `−iμ(2k+1)!` times the Duhamel integral of the linear evolution.
pub fn map_derivative(
    order: usize,
    u0: &SpectralCoeffs,
    t: f64,
    k: u32,
    mu: f64,
    basis: &EigenBasis,
    route: DuhamelRoute,
) -> Result<SpectralCoeffs> {
    u0.check(basis)?;
    let top = 2 * k as usize + 1;
    if order > top {
        return Err(Error::UnsupportedOrder { order, max: top });
    }
    if order == 1 {
        return propagate(u0, basis, t);
    }
    if order < top {
        return Ok(SpectralCoeffs::zeros(basis));
    }
    let integral = match (route, as_eigenfunction(u0)) {
        (DuhamelRoute::Auto, Some((index, amplitude))) => {
            let d = duhamel_of_eigenfunction(&basis.pairs()[index], k, t, basis, &[])?.coeffs;
            d.scaled(Complex64::new(amplitude.powi(top as i32), 0.0))
        }
        (DuhamelRoute::Auto, None) => duhamel_by_quadrature(u0, k, t, basis, None)?,
        (DuhamelRoute::Quadrature(panels), _) => duhamel_by_quadrature(u0, k, t, basis, panels)?,
    };
    Ok(integral.scaled(Complex64::new(0.0, -mu * factorial(top as u32))))
}

fn l4_panels(c: &SpectralCoeffs, basis: &EigenBasis, horizon: f64, panels: Option<usize>) -> usize {
    panels.unwrap_or_else(|| {
        let support = c
            .coeffs
            .iter()
            .zip(basis.pairs())
            .filter(|(v, _)| v.norm() > 0.0)
            .map(|(_, p)| p.lambda);
        let (lo, hi) = support.fold((f64::INFINITY, 0.0f64), |(a, b), l| (a.min(l), b.max(l)));
        // |S_t u|⁴ oscillates at differences of at most two pairs of eigenvalues.
        default_panels(horizon, 2.0 * (hi - lo).max(0.0))
    })
}

/// `(∫₀^T ∫ |S_t u|⁴ dμ dt)^{1/4}` by composite Gauss–Legendre in time.
pub fn strichartz_l4(
    c: &SpectralCoeffs,
    basis: &EigenBasis,
    horizon: f64,
    panels: Option<usize>,
) -> Result<f64> {
    if horizon.is_nan() || horizon <= 0.0 {
        return Err(Error::invalid(
            "T",
            format!("horizon {horizon} must be positive"),
        ));
    }
    c.check(basis)?;
    let panels = l4_panels(c, basis, horizon, panels);
    let weights = basis.vertices().weights();
    let mut total = 0.0;
    for (t, w) in quadrature::composite(0.0, horizon, panels, TIME_RULE_ORDER) {
        let state = from_coeffs(&propagate(c, basis, t)?, basis)?;
        let quartic: Vec<f64> = state
            .values()
            .iter()
            .map(|v| v.norm_sqr().powi(2))
            .collect();
        total += w * integrate_real(&quartic, weights);
    }
    Ok(total.powf(0.25))
}

/// `Re ∫₀^T ⟨S_{T−t}(|S_t u|² S_t u), S_T u⟩ dt`, which equals the fourth power
/// of [`strichartz_l4`] by unitarity.
pub fn strichartz_duality(
    c: &SpectralCoeffs,
    basis: &EigenBasis,
    horizon: f64,
    panels: Option<usize>,
) -> Result<f64> {
    if horizon.is_nan() || horizon <= 0.0 {
        return Err(Error::invalid(
            "T",
            format!("horizon {horizon} must be positive"),
        ));
    }
    let panels = l4_panels(c, basis, horizon, panels);
    let end = propagate(c, basis, horizon)?;
    let mut total = 0.0;
    for (t, w) in quadrature::composite(0.0, horizon, panels, TIME_RULE_ORDER) {
        let state = from_coeffs(&propagate(c, basis, t)?, basis)?;
        let cubic = to_coeffs(&pointwise_power(&state, 1), basis)?;
        let moved = propagate(&cubic, basis, horizon - t)?;
        let inner: f64 = moved
            .coeffs
            .iter()
            .zip(&end.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum();
        total += w * inner;
    }
    Ok(total)
}
