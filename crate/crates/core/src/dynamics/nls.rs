//! Strang splitting for `i∂_t u = −Δu + μ|u|^{2k}u` and γ-derivatives of its flow map.

use num_complex::Complex64;
use rayon::prelude::*;

use super::propagate;
use crate::calculus::{from_coeffs, to_coeffs, GraphFunction, SpectralCoeffs};
use crate::error::{Error, Result};
use crate::spectral::EigenBasis;

/// Largest nonlinear phase `|μ|·max|u|^{2k}·dt` a step may take.
pub const PHASE_LIMIT: f64 = std::f64::consts::FRAC_PI_4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NlsConfig {
    /// Nonlinearity `|u|^{2k}u`, `k ≥ 1`.
    pub k: u32,
    /// Coupling; `±1` in practice, `0` switches the nonlinearity off.
    pub mu: f64,
    pub horizon: f64,
    pub dt: f64,
    /// Data is `gamma · u0`.
    pub gamma: f64,
    /// Record every `sample_every`-th step; the final time is always recorded.
    pub sample_every: usize,
}

impl Default for NlsConfig {
    fn default() -> Self {
        Self {
            k: 1,
            mu: 1.0,
            horizon: 1.0,
            dt: 1e-3,
            gamma: 1.0,
            sample_every: 100,
        }
    }
}

impl NlsConfig {
    /// Number of steps covering the horizon; the horizon must be a whole multiple of `dt`.
    pub fn steps(&self) -> Result<usize> {
        if self.k == 0 {
            return Err(Error::invalid(
                "k",
                "the nonlinearity order must be at least 1",
            ));
        }
        if !self.mu.is_finite() || !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::invalid(
                "gamma",
                format!(
                    "mu = {}, gamma = {} must be finite, gamma ≥ 0",
                    self.mu, self.gamma
                ),
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(
                "dt",
                format!("{} must be positive", self.dt),
            ));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.dt) {
            return Err(Error::invalid(
                "T",
                format!("horizon {} must be at least dt = {}", self.horizon, self.dt),
            ));
        }
        if self.sample_every == 0 {
            return Err(Error::invalid("sample_every", "must be at least 1"));
        }
        let steps = (self.horizon / self.dt).round();
        if (steps * self.dt - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(Error::invalid(
                "dt",
                format!("horizon {} is not a multiple of {}", self.horizon, self.dt),
            ));
        }
        Ok(steps as usize)
    }
}

/// Sampled states `(t, u(t))`, starting at `t = 0`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpectralCoeffs>,
}

impl Trajectory {
    pub fn last(&self) -> &SpectralCoeffs {
        self.states
            .last()
            .expect("a trajectory holds at least the initial state")
    }
}

/// `u ← u·exp(−iμ|u|^{2k}τ)` pointwise.
fn nonlinear_phase(values: &mut [Complex64], k: u32, mu: f64, tau: f64) {
    values
        .par_iter_mut()
        .for_each(|v| *v *= Complex64::from_polar(1.0, -mu * v.norm_sqr().powi(k as i32) * tau));
}

/// Solves with data `cfg.gamma · u0` by Strang splitting: half nonlinear phase,
/// exact linear step, half nonlinear phase.
pub fn nls_solve(u0: &SpectralCoeffs, cfg: &NlsConfig, basis: &EigenBasis) -> Result<Trajectory> {
    let steps = cfg.steps()?;
    let start = u0.scaled(Complex64::new(cfg.gamma, 0.0));
    let mut values = from_coeffs(&start, basis)?.into_values();
    let mut trajectory = Trajectory {
        times: vec![0.0],
        states: vec![start],
    };
    let half = 0.5 * cfg.dt;
    for step in 0..steps {
        let time = step as f64 * cfg.dt;
        let peak = values
            .iter()
            .map(|v| v.norm_sqr())
            .fold(0.0, f64::max)
            .powi(cfg.k as i32);
        let phase = cfg.mu.abs() * peak * cfg.dt;
        if !phase.is_finite() {
            return Err(Error::BlowUp { last_time: time });
        }
        if phase >= PHASE_LIMIT {
            return Err(Error::StepSize { phase, time });
        }
        nonlinear_phase(&mut values, cfg.k, cfg.mu, half);
        let coeffs = to_coeffs(&GraphFunction::new(basis.level(), values)?, basis)?;
        let coeffs = propagate(&coeffs, basis, cfg.dt)?;
        values = from_coeffs(&coeffs, basis)?.into_values();
        nonlinear_phase(&mut values, cfg.k, cfg.mu, half);
        if values
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::BlowUp { last_time: time });
        }
        let done = step + 1;
        if done % cfg.sample_every == 0 || done == steps {
            trajectory.times.push(done as f64 * cfg.dt);
            trajectory.states.push(to_coeffs(
                &GraphFunction::new(basis.level(), values.clone())?,
                basis,
            )?);
        }
    }
    Ok(trajectory)
}

/// Central stencil `(nodes, weights)` for the `order`-th derivative, second-order accurate.
fn stencil(order: usize) -> Result<(&'static [f64], &'static [f64])> {
    Ok(match order {
        1 => (&[-1.0, 1.0], &[-0.5, 0.5]),
        2 => (&[-1.0, 0.0, 1.0], &[1.0, -2.0, 1.0]),
        3 => (&[-2.0, -1.0, 1.0, 2.0], &[-0.5, 1.0, -1.0, 0.5]),
        4 => (&[-2.0, -1.0, 0.0, 1.0, 2.0], &[1.0, -4.0, 6.0, -4.0, 1.0]),
        _ => return Err(Error::UnsupportedOrder { order, max: 4 }),
    })
}

/// `(10⁻⁶)^{1/(m+2)} / ‖u0‖`.
pub fn default_fd_step(order: usize, u0: &SpectralCoeffs) -> f64 {
    1e-6f64.powf(1.0 / (order as f64 + 2.0)) / u0.l2().max(f64::MIN_POSITIVE)
}

/// `∂_γ^m` at `γ = 0` of the solver's state at time `t`, by a central difference in `γ`.
///
/// Negative amplitudes are realized as `−u0`, which the gauge symmetry maps to `−u`.
pub fn gamma_derivative_fd(
    order: usize,
    u0: &SpectralCoeffs,
    t: f64,
    cfg: &NlsConfig,
    h: Option<f64>,
    basis: &EigenBasis,
) -> Result<SpectralCoeffs> {
    let (nodes, weights) = stencil(order)?;
    let h = h.unwrap_or_else(|| default_fd_step(order, u0));
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid("h", format!("{h} must be positive")));
    }
    let run = NlsConfig {
        horizon: t,
        gamma: 1.0,
        sample_every: usize::MAX,
        ..*cfg
    };
    run.steps()?;
    let finals = nodes
        .par_iter()
        .map(|&node| {
            if node == 0.0 {
                return Ok(SpectralCoeffs::zeros(basis));
            }
            let data = u0.scaled(Complex64::new(node * h, 0.0));
            Ok(nls_solve(&data, &run, basis)?.last().clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc = SpectralCoeffs::zeros(basis);
    for (state, w) in finals.iter().zip(weights) {
        acc.coeffs
            .iter_mut()
            .zip(&state.coeffs)
            .for_each(|(a, s)| *a += s * w);
    }
    Ok(acc.scaled(Complex64::new(h.powi(-(order as i32)), 0.0)))
}
