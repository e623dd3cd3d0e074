use rayon::prelude::*;

use super::report::{ExperimentReport, Row, Verdict};
use super::ExperimentConfig;
use crate::calculus::{
    dyadic_bound, dyadic_eigenvalue_check, hs_norm, lq_norm, sigma_q, SpectralCoeffs,
};
use crate::dynamics::{
    duhamel_of_eigenfunction, gamma_derivative_fd, map_derivative, nls_solve, propagate,
    strichartz_l4, DuhamelRoute, NlsConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{dims, enumerate_vertices, support_measure};
use crate::spectral::{
    graph_spectrum, localized_seed, renormalize_eigenvalue, seed_residual, BoundaryCondition,
    EigenBasis, EigenPair, JunctionSite,
};
use crate::Complex64;

fn start(
    name: &str,
    cfg: &ExperimentConfig,
    basis: &EigenBasis,
) -> Result<(ExperimentReport, Row)> {
    cfg.validate()?;
    if basis.level() != cfg.level {
        return Err(Error::LevelMismatch {
            expected: cfg.level,
            found: basis.level(),
        });
    }
    let report = ExperimentReport::new(name, cfg.echo(), Some(basis.fingerprint().to_string()));
    Ok((report, Row::new(name, basis.level(), basis.bc())))
}

fn localized(basis: &EigenBasis, j: usize) -> Result<(usize, &EigenPair)> {
    let idx = basis.localized_index(j).ok_or_else(|| {
        Error::invalid(
            "j",
            format!("generation {j} is not in the level-{} basis", basis.level()),
        )
    })?;
    Ok((idx, &basis.pairs()[idx]))
}

/// `max/min` of positive values; `None` when empty.
fn spread<'a>(values: impl IntoIterator<Item = &'a f64>) -> Option<f64> {
    let (lo, hi, n) = values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY, 0), |(lo, hi, n), &v| {
            (lo.min(v), hi.max(v), n + 1)
        });
    (n > 0).then(|| hi / lo)
}

/// Least-squares slope of `ys` against `xs`; `None` with fewer than two points.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let sxy: f64 = xs[..n]
        .iter()
        .zip(&ys[..n])
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let sxx: f64 = xs[..n].iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Records a solver guard trip or blow-up as a row whose value is the time
/// reached, so the rest of the report survives; other errors propagate.
fn guarded<T>(report: &mut ExperimentReport, row: &Row, result: Result<T>) -> Result<Option<T>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(Error::StepSize { time, .. }) => {
            report.rows.push(row.with("guard_trip", time));
            Ok(None)
        }
        Err(Error::BlowUp { last_time }) => {
            report.rows.push(row.with("blow_up", last_time));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn solver_verdict(report: &mut ExperimentReport) {
    let trips: Vec<String> = report
        .rows
        .iter()
        .filter(|r| r.quantity == "guard_trip" || r.quantity == "blow_up")
        .map(|r| format!("{} at t = {}", r.quantity, r.value))
        .collect();
    let detail = if trips.is_empty() {
        "every solve completed".to_string()
    } else {
        trips.join(", ")
    };
    report
        .verdicts
        .push(Verdict::new("solver_guard", trips.is_empty(), detail));
}

fn values_of<'a>(rows: &'a [Row], quantity: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
    rows.iter().filter(move |r| r.quantity == quantity)
}

/// Basis size, orthonormality and the localized family count.
pub fn run_basis(cfg: &ExperimentConfig, basis: &EigenBasis) -> Result<ExperimentReport> {
    let (mut report, base) = start("basis", cfg, basis)?;
    let th = cfg.thresholds();
    let interior = dyadic_bound(basis.level());
    let expected = match basis.bc() {
        BoundaryCondition::Dirichlet => interior,
        BoundaryCondition::Neumann => interior + 3,
    };
    report.rows.push(
        base.with("size", basis.len() as f64)
            .reference(expected as f64),
    );
    report.rows.push(
        base.with("gram_deviation", basis.gram_deviation())
            .reference(0.0),
    );
    let family = (2..=basis.level())
        .filter(|&j| basis.localized_index(j).is_some())
        .count();
    report.rows.push(
        base.with("localized_count", family as f64)
            .reference(basis.level().saturating_sub(1) as f64),
    );

    let size = &report.rows[0];
    let gram = report.rows[1].value;
    let family = &report.rows[2];
    report.verdicts.push(Verdict::new(
        "size",
        Some(size.value) == size.reference,
        format!("{} eigenpairs, expected {}", size.value, expected),
    ));
    report.verdicts.push(Verdict::new(
        "gram",
        gram <= th.gram,
        format!("max |G − I| = {gram:e}"),
    ));
    report.verdicts.push(Verdict::new(
        "localized_family",
        Some(family.value) == family.reference,
        format!("{} generations present", family.value),
    ));
    Ok(report)
}

/// Continuum eigenvalues, small graph oracles and the Dirichlet dyadic windows.
pub fn run_spectrum(cfg: &ExperimentConfig, basis: &EigenBasis) -> Result<ExperimentReport> {
    let (mut report, base) = start("spectrum", cfg, basis)?;
    let th = cfg.thresholds();
    for (i, p) in basis.pairs().iter().enumerate() {
        report.rows.push(Row {
            index: Some(i),
            ..base.with("eigenvalue", p.lambda)
        });
    }

    let oracles = [
        (1, BoundaryCondition::Dirichlet, [2.0, 5.0, 5.0]),
        (0, BoundaryCondition::Neumann, [0.0, 3.0, 3.0]),
    ];
    for (level, bc, expected) in oracles {
        let spectrum = graph_spectrum(&enumerate_vertices(level)?, bc)?;
        let oracle = Row::new("spectrum", level, bc);
        for (i, (v, e)) in spectrum.values.iter().zip(expected).enumerate() {
            report.rows.push(
                Row {
                    index: Some(i),
                    ..oracle.with("oracle_graph_eigenvalue", *v)
                }
                .reference(e),
            );
        }
    }
    let worst = values_of(&report.rows, "oracle_graph_eigenvalue")
        .map(|r| (r.value - r.reference.unwrap_or(f64::NAN)).abs())
        .fold(0.0, f64::max);
    report.verdicts.push(Verdict::new(
        "oracle",
        worst <= th.oracle,
        format!("largest deviation {worst:e}"),
    ));

    if basis.bc() == BoundaryCondition::Dirichlet {
        for j in 1..basis.level() {
            let (lo, hi) = dyadic_eigenvalue_check(basis, j)?;
            let row = Row {
                j: Some(j),
                ..base.clone()
            };
            report.rows.push(row.with("window_min", lo));
            report.rows.push(row.with("window_max", hi));
        }
    }
    let lo = values_of(&report.rows, "window_min")
        .map(|r| r.value)
        .fold(f64::INFINITY, f64::min);
    let hi = values_of(&report.rows, "window_max")
        .map(|r| r.value)
        .fold(f64::NEG_INFINITY, f64::max);
    report.verdicts.push(if lo.is_finite() {
        Verdict::new(
            "dyadic_windows",
            lo > 0.0 && hi / lo <= th.window_spread,
            format!("all windows inside [{lo:.4}, {hi:.4}]"),
        )
    } else {
        Verdict::vacuous("dyadic_windows")
    });
    Ok(report)
}

/// Seed residuals, eigenvalue growth and support sizes of `ψ^{(j)}`.
pub fn run_localized(cfg: &ExperimentConfig, basis: &EigenBasis) -> Result<ExperimentReport> {
    let (mut report, base) = start("localized", cfg, basis)?;
    let th = cfg.thresholds();
    let site = JunctionSite::ALL[0];
    for j in cfg.generations() {
        let (idx, pair) = localized(basis, j)?;
        let row = Row {
            j: Some(j),
            index: Some(idx),
            ..base.clone()
        };
        let seed = localized_seed(j, site, basis.vertices())?;
        report.rows.push(
            row.with("seed_residual", seed_residual(&seed, basis.vertices()))
                .reference(0.0),
        );
        report.rows.push(
            row.with("eigenvalue", pair.lambda)
                .reference(renormalize_eigenvalue(6.0, j)?),
        );
        let support = support_measure(&basis.function(idx), basis.vertices(), None)?;
        report.rows.push(
            row.with("support_measure", support)
                .reference(2.0 * 3f64.powi(-(j as i32))),
        );
        if let Some(next) = basis.localized_index(j + 1) {
            report.rows.push(
                row.with("growth_ratio", basis.pairs()[next].lambda / pair.lambda)
                    .reference(5.0),
            );
        }
    }

    let rows = &report.rows;
    let residual = values_of(rows, "seed_residual")
        .map(|r| r.value)
        .fold(0.0, f64::max);
    let eig = values_of(rows, "eigenvalue")
        .map(|r| ((r.value - r.reference.unwrap_or(f64::NAN)) / r.value).abs())
        .fold(0.0, f64::max);
    let growth = values_of(rows, "growth_ratio")
        .map(|r| (r.value - 5.0).abs())
        .fold(0.0, f64::max);
    let level = basis.level() as u32;
    // Exact comparison on cell counts: 2·3^{M−j} ≤ #cells ≤ 2·3^{M−j+1}.
    let support_ok = values_of(rows, "support_measure").all(|r| {
        let cells = (r.value * 3f64.powi(level as i32)).round() as u64;
        let span = 3u64.pow(level - r.j.unwrap_or(0) as u32);
        (2 * span..=6 * span).contains(&cells)
    });
    let mut verdicts = Vec::new();
    if rows.is_empty() {
        for name in ["seed_residual", "eigenvalue", "growth_ratio", "support"] {
            verdicts.push(Verdict::vacuous(name));
        }
    } else {
        verdicts.push(Verdict::new(
            "seed_residual",
            residual <= th.seed_residual,
            format!("max {residual:e}"),
        ));
        verdicts.push(Verdict::new(
            "eigenvalue",
            eig <= th.eigen_match_rel,
            format!("max relative gap to the renormalized value 6: {eig:e}"),
        ));
        verdicts.push(Verdict::new(
            "growth_ratio",
            growth <= th.growth_ratio,
            format!("max |ratio − 5| = {growth:e}"),
        ));
        verdicts.push(Verdict::new(
            "support",
            support_ok,
            "2·3^-j ≤ μ(supp) ≤ 2·3^{1-j}",
        ));
    }
    report.verdicts = verdicts;
    Ok(report)
}

/// `‖ψ^{(j)}‖_{L^q} / Λ_j^{σ_q/2}` per `(q, j)`.
pub fn run_sobolev_saturation(
    cfg: &ExperimentConfig,
    basis: &EigenBasis,
) -> Result<ExperimentReport> {
    let (mut report, base) = start("sobolev", cfg, basis)?;
    let th = cfg.thresholds();
    let exponents = cfg
        .q
        .iter()
        .map(|&q| sigma_q(q).map(|s| (q, s)))
        .collect::<Result<Vec<_>>>()?;
    for &(q, sigma) in &exponents {
        for j in cfg.generations() {
            let (idx, pair) = localized(basis, j)?;
            let norm = lq_norm(&basis.function(idx), basis.vertices(), q)?;
            let row = Row {
                q: Some(q),
                j: Some(j),
                index: Some(idx),
                ..base.clone()
            };
            report.rows.push(row.with("lq_norm", norm));
            report
                .rows
                .push(row.with("saturation_ratio", norm / pair.lambda.powf(sigma / 2.0)));
        }
    }
    for &(q, _) in &exponents {
        let name = format!("saturation_q{q}");
        let ratios: Vec<f64> = values_of(&report.rows, "saturation_ratio")
            .filter(|r| r.q == Some(q))
            .map(|r| r.value)
            .collect();
        report.verdicts.push(match spread(&ratios) {
            Some(s) => Verdict::new(name, s <= th.saturation_spread, format!("max/min = {s:.4}")),
            None => Verdict::vacuous(name),
        });
    }
    Ok(report)
}

/// Duhamel ratios `‖Duhamel(ψ^{(j)})‖_{H^s} / ‖ψ^{(j)}‖_{H^s}^{2k+1}` and their growth rate.
pub fn run_illposedness(cfg: &ExperimentConfig, basis: &EigenBasis) -> Result<ExperimentReport> {
    let (mut report, base) = start("illposed", cfg, basis)?;
    let th = cfg.thresholds();
    if let Some(s) = cfg.s.iter().find(|&&s| s >= dims::sigma_infinity()) {
        return Err(Error::invalid(
            "s",
            format!(
                "{s} is not below the embedding threshold {}",
                dims::sigma_infinity()
            ),
        ));
    }
    let k = cfg.k;
    let generations: Vec<usize> = cfg.generations().collect();
    for &s in &cfg.s {
        let cells = generations
            .par_iter()
            .map(|&j| {
                let (idx, pair) = localized(basis, j)?;
                let term = duhamel_of_eigenfunction(pair, k, cfg.horizon, basis, &[s])?.terms[0];
                let norm = hs_norm(&SpectralCoeffs::unit(basis, idx), basis, s)?;
                Ok((
                    j,
                    idx,
                    pair.lambda,
                    term.full / norm.powi(2 * k as i32 + 1),
                    term.resonant / term.full,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let row = Row {
            k: Some(k),
            s: Some(s),
            horizon: Some(cfg.horizon),
            ..base.clone()
        };
        for (j, idx, lambda, ratio, resonant_share) in cells {
            let row = Row {
                j: Some(j),
                index: Some(idx),
                ..row.clone()
            };
            report.rows.push(row.with("eigenvalue", lambda));
            report.rows.push(row.with("duhamel_ratio", ratio));
            report.rows.push(row.with("resonant_share", resonant_share));
        }
        let pick = |q: &str| -> Vec<f64> {
            values_of(&report.rows, q)
                .filter(|r| r.s == Some(s) && r.k == Some(k))
                .map(|r| r.value.ln())
                .collect()
        };
        let target = k as f64 * (dims::sigma_infinity() - s);
        if let Some(slope) = fit_slope(&pick("eigenvalue"), &pick("duhamel_ratio")) {
            report.rows.push(row.with("slope", slope).reference(target));
        }
    }

    for &s in &cfg.s {
        let tag = format!("k{k}_s{s}");
        let ours = |r: &&Row| r.s == Some(s) && r.k == Some(k);
        report
            .verdicts
            .push(match values_of(&report.rows, "slope").find(ours) {
                Some(r) => {
                    let target = r.reference.unwrap_or(f64::NAN);
                    let rel = ((r.value - target) / target).abs();
                    Verdict::new(
                        format!("slope_{tag}"),
                        rel <= th.slope_rel,
                        format!("slope {:.4} vs {target:.4} (relative {rel:.3})", r.value),
                    )
                }
                None => Verdict::vacuous(format!("slope_{tag}")),
            });
        let peak = values_of(&report.rows, "duhamel_ratio")
            .filter(ours)
            .map(|r| r.value)
            .fold(f64::NAN, f64::max);
        for &c in &th.ladder {
            let name = format!("ladder_{tag}_C{c}");
            report.verdicts.push(if peak.is_nan() {
                Verdict::vacuous(name)
            } else {
                Verdict::new(name, peak > c, format!("largest ratio {peak:.4}"))
            });
        }
    }
    Ok(report)
}

/// Space-time `L⁴` norms of `S_t ψ^{(j)}` against `L⁴` and `H^s` norms.
pub fn run_strichartz(cfg: &ExperimentConfig, basis: &EigenBasis) -> Result<ExperimentReport> {
    let (mut report, base) = start("strichartz", cfg, basis)?;
    let th = cfg.thresholds();
    let critical = dims::spectral() / 4.0;
    let sub = critical - 0.1;
    let horizon = cfg.horizon;
    let generations: Vec<usize> = cfg.generations().collect();
    let cells = generations
        .par_iter()
        .map(|&j| {
            let (idx, _) = localized(basis, j)?;
            let c = SpectralCoeffs::unit(basis, idx);
            let l4 = lq_norm(&basis.function(idx), basis.vertices(), 4.0)?;
            let st = strichartz_l4(&c, basis, horizon, None)?;
            Ok((
                j,
                idx,
                l4,
                st,
                hs_norm(&c, basis, sub)?,
                hs_norm(&c, basis, critical)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let row = Row {
        horizon: Some(horizon),
        ..base.clone()
    };
    for (j, idx, l4, st, h_sub, h_crit) in cells {
        let row = Row {
            j: Some(j),
            index: Some(idx),
            ..row.clone()
        };
        report.rows.push(
            row.with("l4l4_fourth", st.powi(4))
                .reference(horizon * l4.powi(4)),
        );
        report.rows.push(Row {
            s: Some(sub),
            ..row.with("strichartz_ratio", st / h_sub)
        });
        report.rows.push(Row {
            s: Some(critical),
            ..row.with("strichartz_ratio", st / h_crit)
        });
    }

    let identity = values_of(&report.rows, "l4l4_fourth")
        .map(|r| ((r.value - r.reference.unwrap_or(f64::NAN)) / r.value).abs())
        .fold(0.0, f64::max);
    let ratios = |s: f64| -> Vec<f64> {
        values_of(&report.rows, "strichartz_ratio")
            .filter(|r| r.s == Some(s))
            .map(|r| r.value)
            .collect()
    };
    let (sub_ratios, crit_ratios) = (ratios(sub), ratios(critical));
    if sub_ratios.is_empty() {
        for name in ["identity", "subcritical_increasing", "critical_bounded"] {
            report.verdicts.push(Verdict::vacuous(name));
        }
        return Ok(report);
    }
    report.verdicts.push(Verdict::new(
        "identity",
        identity <= th.identity_rel,
        format!("max relative gap {identity:e}"),
    ));
    let increasing = sub_ratios.windows(2).all(|w| w[1] > w[0]);
    report.verdicts.push(Verdict::new(
        "subcritical_increasing",
        increasing,
        format!("ratios {sub_ratios:.4?}"),
    ));
    let s = spread(&crit_ratios).unwrap_or(f64::NAN);
    report.verdicts.push(Verdict::new(
        "critical_bounded",
        s <= th.critical_spread,
        format!("max/min = {s:.4}"),
    ));
    Ok(report)
}

/// Finite differences in the amplitude against the closed-form flow-map derivatives,
/// for data `ψ^{(2)}`.
pub fn run_derivative_check(
    cfg: &ExperimentConfig,
    basis: &EigenBasis,
) -> Result<ExperimentReport> {
    let (mut report, base) = start("derivcheck", cfg, basis)?;
    let th = cfg.thresholds();
    let (idx, pair) = localized(basis, 2)?;
    let u0 = SpectralCoeffs::unit(basis, idx);
    let t = cfg.horizon;
    let h = cfg.fd_step;
    let k = cfg.k;
    let solver = NlsConfig {
        k,
        mu: cfg.mu,
        horizon: t,
        dt: cfg.dt,
        gamma: 1.0,
        sample_every: usize::MAX,
    };
    let row = Row {
        k: Some(k),
        j: Some(2),
        horizon: Some(t),
        dt: Some(cfg.dt),
        ..base.clone()
    };
    let fd = |report: &mut ExperimentReport, order: usize, step: f64| {
        let at = Row {
            index: Some(order),
            ..row.clone()
        };
        let result = gamma_derivative_fd(order, &u0, t, &solver, Some(step), basis);
        guarded(report, &at, result)
    };
    let scale = u0.l2();

    let linear = propagate(&u0, basis, t)?;
    let e_h = fd(&mut report, 1, h)?.map_or(f64::NAN, |c| c.distance(&linear));
    let e_half = fd(&mut report, 1, h / 2.0)?.map_or(f64::NAN, |c| c.distance(&linear));
    let first = Row {
        index: Some(1),
        ..row.clone()
    };
    report.rows.push(first.with("fd_step", h));
    report.rows.push(first.with("fd_error", e_h).reference(0.0));
    report
        .rows
        .push(first.with("fd_error_half_step", e_half).reference(0.0));
    report.rows.push(
        first
            .with("richardson_slope", (e_h / e_half).log2())
            .reference(2.0),
    );

    let mut vanishing: Vec<usize> = (2..2 * k as usize + 1).filter(|&m| m <= 4).collect();
    vanishing.dedup();
    for &m in &vanishing {
        let norm = fd(&mut report, m, h)?.map_or(f64::NAN, |c| c.l2());
        report.rows.push(
            Row {
                index: Some(m),
                ..row.with("fd_norm", norm)
            }
            .reference(0.0),
        );
    }
    if k == 1 {
        let closed = map_derivative(3, &u0, t, 1, cfg.mu, basis, DuhamelRoute::Auto)?;
        let err = fd(&mut report, 3, h)?.map_or(f64::NAN, |c| c.distance(&closed) / closed.l2());
        report.rows.push(
            Row {
                index: Some(3),
                ..row.with("fd_relative_error", err)
            }
            .reference(0.0),
        );
    } else {
        // The top order exceeds the stencil table; check the resonant lower bound instead.
        let term = duhamel_of_eigenfunction(pair, k, t, basis, &[0.0])?.terms[0];
        let top = 2 * k as usize + 1;
        report.rows.push(
            Row {
                index: Some(top),
                ..row.with("resonant_bound_ratio", term.full / term.resonant)
            }
            .reference(1.0),
        );
    }

    let slope = report
        .select("richardson_slope")
        .next()
        .map(|r| r.value)
        .unwrap_or(f64::NAN);
    report.verdicts.push(Verdict::new(
        "order1_richardson",
        (slope - 2.0).abs() <= th.richardson,
        format!("slope {slope:.3}"),
    ));
    let floor = th.fd_noise * scale;
    let extra: Vec<Verdict> = report
        .select("fd_norm")
        .map(|r| {
            let m = r.index.unwrap_or(0);
            Verdict::new(
                format!("order{m}_vanishes"),
                r.value <= floor,
                format!("norm {:e}", r.value),
            )
        })
        .chain(report.select("fd_relative_error").map(|r| {
            Verdict::new(
                "order3_matches",
                r.value <= th.fd_rel,
                format!("relative L² error {:.4}", r.value),
            )
        }))
        .chain(report.select("resonant_bound_ratio").map(|r| {
            Verdict::new(
                "resonant_bound",
                r.value >= 1.0 - 1e-12,
                format!("full/resonant {:.4}", r.value),
            )
        }))
        .collect();
    report.verdicts.extend(extra);
    solver_verdict(&mut report);
    Ok(report)
}

/// Mass conservation, the linear limit and the Strang order of the NLS solver.
pub fn run_nls(cfg: &ExperimentConfig, basis: &EigenBasis) -> Result<ExperimentReport> {
    let (mut report, base) = start("nls", cfg, basis)?;
    let th = cfg.thresholds();
    let (idx, _) = localized(basis, 2)?;
    let other = if idx == 0 { 1 } else { 0 };
    let mut u0 = SpectralCoeffs::zeros(basis);
    u0.coeffs[idx] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    u0.coeffs[other] = Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);

    let solver = NlsConfig {
        k: cfg.k,
        mu: cfg.mu,
        horizon: cfg.horizon,
        dt: cfg.dt,
        gamma: cfg.gamma,
        sample_every: 1,
    };
    let steps = solver.steps()?;
    let solver = NlsConfig {
        sample_every: (steps / 10).max(1),
        ..solver
    };
    let row = Row {
        k: Some(cfg.k),
        horizon: Some(cfg.horizon),
        dt: Some(cfg.dt),
        ..base.clone()
    };
    let trajectory = nls_solve(&u0, &solver, basis);
    if let Some(trajectory) = guarded(&mut report, &row, trajectory)? {
        let mass0 = trajectory.states[0].l2();
        for (t, state) in trajectory.times.iter().zip(&trajectory.states) {
            let step = (t / cfg.dt).round() as usize;
            report.rows.push(
                Row {
                    index: Some(step),
                    ..row.with("mass", state.l2())
                }
                .reference(mass0),
            );
        }
    }
    let linear = nls_solve(&u0, &NlsConfig { mu: 0.0, ..solver }, basis)?;
    let exact = propagate(&u0, basis, cfg.horizon)?.scaled(Complex64::new(cfg.gamma, 0.0));
    report.rows.push(
        row.with("linear_deviation", linear.last().distance(&exact))
            .reference(0.0),
    );

    // Strang is second order once dt·Λ_max ≲ 1; use the largest such power of two.
    let top = basis.pairs().last().map_or(1.0, |p| p.lambda).max(1.0);
    let dt0 = 2f64.powi(-(top.log2().floor() as i32));
    let rich = Row {
        dt: Some(dt0),
        horizon: Some(256.0 * dt0),
        ..row.clone()
    };
    let mut run = |dt: f64| -> Result<Option<SpectralCoeffs>> {
        let c = NlsConfig {
            horizon: 256.0 * dt0,
            dt,
            sample_every: usize::MAX,
            ..solver
        };
        let result = nls_solve(&u0, &c, basis).map(|tr| tr.last().clone());
        guarded(
            &mut report,
            &Row {
                dt: Some(dt),
                ..rich.clone()
            },
            result,
        )
    };
    let (a, b, c) = (run(dt0)?, run(dt0 / 2.0)?, run(dt0 / 4.0)?);
    let gap = |x: &Option<SpectralCoeffs>, y: &Option<SpectralCoeffs>| match (x, y) {
        (Some(x), Some(y)) => x.distance(y),
        _ => f64::NAN,
    };
    let (d1, d2) = (gap(&a, &b), gap(&b, &c));
    report.rows.push(Row {
        index: Some(1),
        ..rich.with("richardson_difference", d1)
    });
    report.rows.push(Row {
        index: Some(2),
        ..rich.with("richardson_difference", d2)
    });
    report.rows.push(
        rich.with("richardson_slope", (d1 / d2).log2())
            .reference(2.0),
    );

    // NaN when the trajectory was cut short, so the verdict fails.
    let drift = report
        .select("mass")
        .map(|r| (r.value - r.reference.unwrap_or(f64::NAN)).abs())
        .reduce(f64::max)
        .unwrap_or(f64::NAN);
    let lin = report
        .select("linear_deviation")
        .next()
        .map_or(f64::NAN, |r| r.value);
    let slope = report
        .select("richardson_slope")
        .next()
        .map_or(f64::NAN, |r| r.value);
    report.verdicts.push(Verdict::new(
        "mass",
        drift <= th.mass_drift,
        format!("max drift {drift:e}"),
    ));
    report.verdicts.push(Verdict::new(
        "linear_limit",
        lin <= th.linear_exact,
        format!("deviation {lin:e}"),
    ));
    report.verdicts.push(Verdict::new(
        "strang_order",
        (slope - 2.0).abs() <= th.richardson,
        format!("slope {slope:.3} at dt {dt0:e}"),
    ));
    solver_verdict(&mut report);
    Ok(report)
}

/// `Λ(ψ^{(2)})` against the sixth distinct Dirichlet eigenvalue and the
/// smallest nonzero Neumann eigenvalue.
pub fn run_cross_pipeline(
    cfg: &ExperimentConfig,
    dirichlet: &EigenBasis,
    neumann: &EigenBasis,
) -> Result<ExperimentReport> {
    let (mut report, base) = start("cross_pipeline", cfg, dirichlet)?;
    if dirichlet.bc() != BoundaryCondition::Dirichlet || neumann.bc() != BoundaryCondition::Neumann
    {
        return Err(Error::invalid(
            "bc",
            "expects a Dirichlet and a Neumann basis",
        ));
    }
    let th = cfg.thresholds();
    let target = localized(dirichlet, 2)?.1.lambda;
    let mut distinct: Vec<f64> = Vec::new();
    for p in dirichlet.pairs() {
        if distinct
            .last()
            .is_none_or(|&l| p.lambda - l > th.eigen_match_rel * p.lambda)
        {
            distinct.push(p.lambda);
        }
    }
    let neumann_first = neumann
        .pairs()
        .iter()
        .map(|p| p.lambda)
        .find(|&l| l > 0.0)
        .unwrap_or(f64::NAN);
    let neumann_row = Row::new(
        "cross_pipeline",
        neumann.level(),
        BoundaryCondition::Neumann,
    );
    report.rows.push(Row {
        j: Some(2),
        ..base.with("localized_eigenvalue", target)
    });
    report.rows.push(
        Row {
            index: Some(6),
            ..base.with(
                "dirichlet_distinct",
                distinct.get(5).copied().unwrap_or(f64::NAN),
            )
        }
        .reference(target),
    );
    report.rows.push(
        neumann_row
            .with("neumann_first_nonzero", neumann_first)
            .reference(target),
    );

    let check = |r: &Row| ((r.value - r.reference.unwrap_or(f64::NAN)) / r.value).abs();
    let d = check(&report.rows[1]);
    let n = check(&report.rows[2]);
    report.verdicts.push(Verdict::new(
        "dirichlet_sixth",
        d <= th.eigen_match_rel,
        format!("{} vs {target} (relative {d:e})", report.rows[1].value),
    ));
    report.verdicts.push(Verdict::new(
        "neumann_first_nonzero",
        n <= th.eigen_match_rel,
        format!("{} vs {target} (relative {n:e})", report.rows[2].value),
    ));
    Ok(report)
}

/// Every driver at the configured level; Dirichlet drives the spectral-window
/// and dynamics checks, and both bases enter the basis and cross-pipeline checks.
pub fn run_verify(
    cfg: &ExperimentConfig,
    dirichlet: &EigenBasis,
    neumann: &EigenBasis,
) -> Result<ExperimentReport> {
    let (mut report, _) = start("verify", cfg, dirichlet)?;
    let main = match cfg.bc {
        BoundaryCondition::Dirichlet => dirichlet,
        BoundaryCondition::Neumann => neumann,
    };
    report.absorb(run_basis(cfg, dirichlet)?);
    let mut n = run_basis(cfg, neumann)?;
    n.experiment = "basis_neumann".into();
    report.absorb(n);
    report.absorb(run_spectrum(cfg, dirichlet)?);
    report.absorb(run_localized(cfg, main)?);
    report.absorb(run_sobolev_saturation(cfg, main)?);
    report.absorb(run_illposedness(cfg, main)?);
    report.absorb(run_strichartz(cfg, main)?);
    report.absorb(run_derivative_check(cfg, main)?);
    report.absorb(run_nls(cfg, main)?);
    report.absorb(run_cross_pipeline(cfg, dirichlet, neumann)?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use std::sync::OnceLock;

    use super::*;
    use crate::spectral::build_basis;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig {
            level: 4,
            ..Default::default()
        }
    }

    fn dirichlet() -> &'static EigenBasis {
        static B: OnceLock<EigenBasis> = OnceLock::new();
        B.get_or_init(|| build_basis(4, BoundaryCondition::Dirichlet).unwrap())
    }

    #[test]
    fn slope_fit() {
        assert_eq!(fit_slope(&[1.0], &[2.0]), None);
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x - 1.0).collect();
        assert!((fit_slope(&xs, &ys).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn saturation_rows_and_rejections() {
        let b = dirichlet();
        let r = run_sobolev_saturation(&cfg(), b).unwrap();
        assert_eq!(r.select("saturation_ratio").count(), 3 * 3);
        assert!(r
            .rows
            .iter()
            .all(|row| row.level == 4 && row.q.is_some() && row.j.is_some()));
        assert!(r.passed());
        assert!(run_sobolev_saturation(
            &ExperimentConfig {
                q: vec![2.0],
                ..cfg()
            },
            b
        )
        .is_err());
        let empty = run_sobolev_saturation(
            &ExperimentConfig {
                j_min: 4,
                j_max: Some(3),
                ..cfg()
            },
            b,
        )
        .unwrap();
        assert!(empty.rows.is_empty());
        assert!(empty.verdicts.iter().all(|v| v.vacuous && v.passed));
        assert!(run_sobolev_saturation(&ExperimentConfig { level: 5, ..cfg() }, b).is_err());
    }

    #[test]
    fn illposed_rows() {
        let b = dirichlet();
        let r = run_illposedness(
            &ExperimentConfig {
                s: vec![0.3],
                ..cfg()
            },
            b,
        )
        .unwrap();
        assert_eq!(r.select("duhamel_ratio").count(), 3);
        assert_eq!(r.select("slope").count(), 1);
        assert!(r.verdict("slope_k1_s0.3").is_some());
        assert_eq!(
            r.verdicts
                .iter()
                .filter(|v| v.name.starts_with("ladder_"))
                .count(),
            3
        );
        assert!(r
            .select("resonant_share")
            .all(|row| row.value <= 1.0 + 1e-12));
        let boundary = ExperimentConfig {
            s: vec![dims::sigma_infinity()],
            ..cfg()
        };
        assert!(run_illposedness(&boundary, b).is_err());
    }

    #[test]
    fn strichartz_identity_holds() {
        let r = run_strichartz(&cfg(), dirichlet()).unwrap();
        assert!(r.verdict("identity").unwrap().passed);
        assert!(run_strichartz(
            &ExperimentConfig {
                horizon: 0.0,
                ..cfg()
            },
            dirichlet()
        )
        .is_err());
    }

    #[test]
    fn localized_and_spectrum_pass() {
        let b = dirichlet();
        let loc = run_localized(&cfg(), b).unwrap();
        assert!(loc.passed(), "{:?}", loc.verdicts);
        let spec = run_spectrum(&cfg(), b).unwrap();
        assert!(spec.passed(), "{:?}", spec.verdicts);
        assert_eq!(spec.select("eigenvalue").count(), b.len());
        let basis = run_basis(&cfg(), b).unwrap();
        assert!(basis.passed(), "{:?}", basis.verdicts);
    }

    #[test]
    fn reports_are_deterministic() {
        let b = dirichlet();
        let a = run_illposedness(&cfg(), b).unwrap();
        let c = run_illposedness(&cfg(), b).unwrap();
        assert_eq!(a.to_csv(), c.to_csv());
        assert_eq!(a.to_json(), c.to_json());
    }

    #[test]
    fn guard_trips_become_rows() {
        let loud = ExperimentConfig {
            k: 2,
            gamma: 8.0,
            horizon: 0.01,
            ..cfg()
        };
        let report = run_nls(&loud, dirichlet()).unwrap();
        let trip = report.select("guard_trip").next().expect("the guard trips");
        assert_eq!(trip.value, 0.0);
        assert!(!report.verdict("solver_guard").unwrap().passed);
        assert!(!report.verdict("mass").unwrap().passed);
        assert!(report.verdict("linear_limit").unwrap().passed);

        let quiet = run_nls(
            &ExperimentConfig {
                horizon: 0.01,
                ..cfg()
            },
            dirichlet(),
        )
        .unwrap();
        assert!(quiet.verdict("solver_guard").unwrap().passed);
        assert!(quiet.select("guard_trip").next().is_none());
    }
}
