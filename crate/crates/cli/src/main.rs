//! `sgnls`: batch experiments on the Sierpinski gasket eigenbasis.
//!
//! Exit codes: 0 when every verdict passes, 1 when any verdict fails,
//! 2 on configuration or runtime errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sgnls_core::experiments::{
    run_basis, run_derivative_check, run_illposedness, run_localized, run_nls,
    run_sobolev_saturation, run_spectrum, run_strichartz, run_verify, CacheStatus,
    ExperimentConfig, ExperimentReport, OutputFormat, ToleranceProfile,
};
use sgnls_core::spectral::{BoundaryCondition, EigenBasis};

/// Environment variable that takes precedence over `--cache`.
const CACHE_ENV: &str = "SGNLS_CACHE";

#[derive(Parser, Debug)]
#[command(
    name = "sgnls",
    version,
    about = "Spectral and NLS experiments on the Sierpinski gasket"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Basis size, orthonormality and the localized family.
    Basis,
    /// Continuum eigenvalues, graph oracles and dyadic windows.
    Spectrum,
    /// Seed residuals, eigenvalue growth and supports of the localized family.
    Localized,
    /// L^q saturation ratios of the localized family.
    Sobolev,
    /// Duhamel growth rates and the ill-posedness ladder.
    Illposed,
    /// Space-time L^4 norms against Sobolev norms.
    Strichartz,
    /// Finite-difference flow-map derivatives against closed forms.
    Derivcheck,
    /// Mass conservation, linear limit and splitting order of the NLS solver.
    Nls,
    /// Every check above, with both boundary conditions.
    Verify,
}

#[derive(Args, Debug)]
struct Options {
    #[arg(long, global = true, default_value_t = 6)]
    level: usize,
    #[arg(long, global = true, default_value = "dirichlet")]
    bc: BoundaryCondition,
    #[arg(long, global = true, default_value_t = 1)]
    k: u32,
    /// Sobolev exponent; repeat for several.
    #[arg(long = "s", global = true)]
    s: Vec<f64>,
    /// Lebesgue exponent; repeat for several.
    #[arg(long = "q", global = true)]
    q: Vec<f64>,
    #[arg(long, global = true, default_value_t = 2)]
    jmin: usize,
    /// Defaults to the level.
    #[arg(long, global = true)]
    jmax: Option<usize>,
    /// Time horizon.
    #[arg(long = "T", global = true, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, global = true, default_value_t = 1e-3)]
    dt: f64,
    /// Coupling of the nonlinearity.
    #[arg(
        long,
        global = true,
        default_value_t = 1.0,
        allow_negative_numbers = true
    )]
    mu: f64,
    /// Data amplitude for `nls`.
    #[arg(long, global = true, default_value_t = 1.0)]
    gamma: f64,
    /// Amplitude step of the finite differences in `derivcheck`.
    #[arg(long, global = true, default_value_t = 0.025)]
    fd_step: f64,
    /// Report destination; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value = "csv")]
    format: OutputFormat,
    /// Basis cache directory; overridden by SGNLS_CACHE.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "default")]
    tolerance_profile: ToleranceProfile,
}

impl Options {
    fn config(&self) -> ExperimentConfig {
        let defaults = ExperimentConfig::default();
        let cache_dir = std::env::var_os(CACHE_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .or_else(|| self.cache.clone());
        ExperimentConfig {
            level: self.level,
            bc: self.bc,
            k: self.k,
            mu: self.mu,
            s: if self.s.is_empty() {
                defaults.s
            } else {
                self.s.clone()
            },
            q: if self.q.is_empty() {
                defaults.q
            } else {
                self.q.clone()
            },
            j_min: self.jmin,
            j_max: self.jmax,
            horizon: self.horizon,
            dt: self.dt,
            gamma: self.gamma,
            fd_step: self.fd_step,
            profile: self.tolerance_profile,
            format: self.format,
            cache_dir,
            threads: self.threads,
        }
    }
}

fn load(cfg: &ExperimentConfig, bc: BoundaryCondition) -> sgnls_core::Result<EigenBasis> {
    let (basis, status) = cfg.basis(bc)?;
    let note = match status {
        None => "built (no cache)",
        Some(CacheStatus::Hit) => "loaded from cache",
        Some(CacheStatus::Built) => "built and cached",
        Some(CacheStatus::Rebuilt) => "rebuilt, cache described another basis",
    };
    eprintln!(
        "basis level {} {bc}: {} pairs, {note}",
        cfg.level,
        basis.len()
    );
    Ok(basis)
}

fn run(command: Command, cfg: &ExperimentConfig) -> sgnls_core::Result<ExperimentReport> {
    cfg.validate()?;
    if command == Command::Verify {
        let dirichlet = load(cfg, BoundaryCondition::Dirichlet)?;
        let neumann = load(cfg, BoundaryCondition::Neumann)?;
        return run_verify(cfg, &dirichlet, &neumann);
    }
    let basis = load(cfg, cfg.bc)?;
    match command {
        Command::Basis => run_basis(cfg, &basis),
        Command::Spectrum => run_spectrum(cfg, &basis),
        Command::Localized => run_localized(cfg, &basis),
        Command::Sobolev => run_sobolev_saturation(cfg, &basis),
        Command::Illposed => run_illposedness(cfg, &basis),
        Command::Strichartz => run_strichartz(cfg, &basis),
        Command::Derivcheck => run_derivative_check(cfg, &basis),
        Command::Nls => run_nls(cfg, &basis),
        Command::Verify => unreachable!("handled above"),
    }
}

fn execute(cli: &Cli) -> sgnls_core::Result<bool> {
    let cfg = cli.opts.config();
    cfg.validate()?;
    let report = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| sgnls_core::Error::Precondition(format!("thread pool: {e}")))?
            .install(|| run(cli.command, &cfg))?,
        None => run(cli.command, &cfg)?,
    };
    match &cli.opts.out {
        Some(path) => report.write(path, cfg.format)?,
        None => print!("{}", report.render(cfg.format)),
    }
    for v in &report.verdicts {
        let mark = match (v.passed, v.vacuous) {
            (true, false) => "PASS",
            (true, true) => "PASS (vacuous)",
            (false, _) => "FAIL",
        };
        eprintln!("{mark} {}: {}", v.name, v.detail);
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
