//! Batch experiment drivers, basis cache persistence and report export.
//!
//! Drivers take a validated [`ExperimentConfig`] and a basis and return an
//! [`ExperimentReport`] whose verdicts are computed from its own rows.

mod cache;
mod drivers;
mod report;

use std::path::PathBuf;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::DEFAULT_MAX_LEVEL;
use crate::spectral::{build_basis, BoundaryCondition, EigenBasis};

pub use cache::{
    basis_cache_load, basis_cache_save, cache_path, format_hex, load_or_build, parse_hex,
    CacheStatus, FORMAT_VERSION,
};
pub use drivers::{
    fit_slope, run_basis, run_cross_pipeline, run_derivative_check, run_illposedness,
    run_localized, run_nls, run_sobolev_saturation, run_spectrum, run_strichartz, run_verify,
};
pub use report::{ExperimentReport, OutputFormat, Row, Verdict, CSV_COLUMNS};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ToleranceProfile {
    Strict,
    #[default]
    Default,
}

impl std::str::FromStr for ToleranceProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(ToleranceProfile::Strict),
            "default" => Ok(ToleranceProfile::Default),
            other => Err(Error::invalid(
                "tolerance-profile",
                format!("`{other}` is neither strict nor default"),
            )),
        }
    }
}

/// Verdict thresholds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Thresholds {
    /// Bound on max/min of the `L^q` saturation ratios.
    pub saturation_spread: f64,
    /// Relative tolerance of fitted slopes.
    pub slope_rel: f64,
    /// Constants the Duhamel ratio must exceed for some generation.
    pub ladder: Vec<f64>,
    /// Relative tolerance of the Strichartz time-quadrature identity.
    pub identity_rel: f64,
    /// Bound on max/min of the critical Strichartz ratios.
    pub critical_spread: f64,
    /// Relative L² tolerance of the order-3 finite difference.
    pub fd_rel: f64,
    /// Absolute noise floor, relative to `‖u0‖`, for vanishing derivatives.
    pub fd_noise: f64,
    /// Allowed deviation of Richardson slopes from 2.
    pub richardson: f64,
    pub mass_drift: f64,
    pub linear_exact: f64,
    pub gram: f64,
    pub seed_residual: f64,
    pub growth_ratio: f64,
    pub oracle: f64,
    pub eigen_match_rel: f64,
    /// Bound on the ratio of the upper to the lower end of the dyadic hull.
    pub window_spread: f64,
}

impl Thresholds {
    pub fn for_profile(profile: ToleranceProfile) -> Self {
        let base = Self {
            saturation_spread: 4.0,
            slope_rel: 0.05,
            ladder: vec![10.0, 100.0, 1000.0],
            identity_rel: 1e-6,
            critical_spread: 2.0,
            fd_rel: 1e-2,
            fd_noise: 1e-6,
            richardson: 0.3,
            mass_drift: 1e-8,
            linear_exact: 1e-10,
            gram: 1e-8,
            seed_residual: 1e-12,
            growth_ratio: 1e-9,
            oracle: 1e-12,
            eigen_match_rel: 1e-8,
            window_spread: 10.0,
        };
        match profile {
            ToleranceProfile::Default => base,
            ToleranceProfile::Strict => Self {
                saturation_spread: 2.0,
                slope_rel: 0.025,
                identity_rel: 1e-9,
                fd_rel: 5e-3,
                richardson: 0.15,
                mass_drift: 1e-10,
                gram: 1e-10,
                ..base
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub level: usize,
    pub bc: BoundaryCondition,
    pub k: u32,
    pub mu: f64,
    pub s: Vec<f64>,
    pub q: Vec<f64>,
    pub j_min: usize,
    /// Defaults to `level`.
    pub j_max: Option<usize>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    /// Data amplitude of the `nls` driver.
    pub gamma: f64,
    /// Finite-difference step in the amplitude; also halved for Richardson slopes.
    pub fd_step: f64,
    pub profile: ToleranceProfile,
    pub format: OutputFormat,
    /// Not echoed into reports, which must not depend on where bases are cached.
    #[serde(skip)]
    pub cache_dir: Option<PathBuf>,
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            level: 6,
            bc: BoundaryCondition::Dirichlet,
            k: 1,
            mu: 1.0,
            s: vec![0.3, 0.5],
            q: vec![4.0, 6.0, 8.0],
            j_min: 2,
            j_max: None,
            horizon: 1.0,
            dt: 1e-3,
            gamma: 1.0,
            fd_step: 0.025,
            profile: ToleranceProfile::Default,
            format: OutputFormat::Csv,
            cache_dir: None,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.level == 0 || self.level > DEFAULT_MAX_LEVEL {
            return Err(Error::invalid(
                "level",
                format!("{} is outside 1..={DEFAULT_MAX_LEVEL}", self.level),
            ));
        }
        if self.k == 0 {
            return Err(Error::invalid("k", "must be at least 1"));
        }
        if let Some(s) = self.s.iter().find(|s| !(0.0..2.0).contains(*s)) {
            return Err(Error::invalid("s", format!("{s} is outside [0, 2)")));
        }
        if let Some(q) = self.q.iter().find(|q| !(q.is_finite() && **q > 2.0)) {
            return Err(Error::invalid(
                "q",
                format!("{q} must be a finite value above 2"),
            ));
        }
        let (lo, hi) = self.j_range();
        if lo <= hi && (lo < 2 || hi > self.level) {
            return Err(Error::invalid(
                "j",
                format!("range {lo}..={hi} is outside 2..={}", self.level),
            ));
        }
        for (name, v) in [
            ("T", self.horizon),
            ("dt", self.dt),
            ("fd_step", self.fd_step),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("{v} must be positive")));
            }
        }
        if !self.mu.is_finite() || !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid(
                "gamma",
                "mu must be finite and gamma nonnegative",
            ));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads", "must be at least 1"));
        }
        Ok(())
    }

    /// Inclusive generation range; empty when `j_min > j_max`.
    pub fn j_range(&self) -> (usize, usize) {
        (self.j_min, self.j_max.unwrap_or(self.level))
    }

    pub fn generations(&self) -> std::ops::RangeInclusive<usize> {
        let (lo, hi) = self.j_range();
        lo..=hi
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds::for_profile(self.profile)
    }

    /// Basis for the configured level and `bc`, through the cache when one is set.
    pub fn basis(&self, bc: BoundaryCondition) -> Result<(EigenBasis, Option<CacheStatus>)> {
        match &self.cache_dir {
            Some(dir) => load_or_build(dir, self.level, bc).map(|(b, s)| (b, Some(s))),
            None => Ok((build_basis(self.level, bc)?, None)),
        }
    }

    pub(crate) fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configs serialize")
    }
}
