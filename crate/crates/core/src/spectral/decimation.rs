use num_complex::Complex64;

use super::laplacian::neg_laplacian_rows;
use crate::calculus::GraphFunction;
use crate::error::{Error, Result};
use crate::geometry::{vertex_count, VertexSet};

/// Graph eigenvalues at which the vertex-extension formula breaks down.
pub const FORBIDDEN: [f64; 3] = [2.0, 5.0, 6.0];

const FORBIDDEN_TOL: f64 = 1e-9;
const RENORM_TOL: f64 = 1e-14;
const RENORM_MAX_ITER: usize = 60;

pub fn is_forbidden(lambda: f64) -> bool {
    FORBIDDEN
        .iter()
        .any(|f| (lambda - f).abs() <= FORBIDDEN_TOL)
}

/// One step of spectral decimation with the forbidden flag on the result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchValue {
    pub value: f64,
    pub forbidden: bool,
}

impl BranchValue {
    fn new(value: f64) -> Self {
        Self {
            value,
            forbidden: is_forbidden(value),
        }
    }
}

fn discriminant(lambda: f64) -> Result<f64> {
    if !(0.0..=6.25).contains(&lambda) {
        return Err(Error::DecimationDomain(lambda));
    }
    Ok((25.0 - 4.0 * lambda).sqrt())
}

/// Minus branch: the root of `λ_m = x(5 − x)` below 5/2.
pub fn decimate_down(lambda: f64) -> Result<BranchValue> {
    // 2λ/(5 + √(25−4λ)) equals (5 − √(25−4λ))/2 without cancellation near 0.
    let d = discriminant(lambda)?;
    Ok(BranchValue::new(2.0 * lambda / (5.0 + d)))
}

/// Plus branch: the root of `λ_m = x(5 − x)` above 5/2.
pub fn decimate_down_plus(lambda: f64) -> Result<BranchValue> {
    let d = discriminant(lambda)?;
    Ok(BranchValue::new((5.0 + d) / 2.0))
}

/// `λ_m = λ_{m+1}(5 − λ_{m+1})`.
pub fn decimate_up(lambda_next: f64) -> f64 {
    lambda_next * (5.0 - lambda_next)
}

fn is_six(lambda: f64) -> bool {
    (lambda - 6.0).abs() <= FORBIDDEN_TOL
}

/// `Λ = (3/2) lim 5^n λ_n` along the minus branch from `λ` at `level`.
///
/// A value of 6 continues through 3, since the minus root 2 is forbidden.
pub fn renormalize_eigenvalue(lambda: f64, level: usize) -> Result<f64> {
    if !(0.0..=6.0 + FORBIDDEN_TOL).contains(&lambda) {
        return Err(Error::DecimationDomain(lambda));
    }
    let (mut x, mut n) = if is_six(lambda) {
        (3.0, level as i32 + 1)
    } else {
        (lambda, level as i32)
    };
    let mut scaled = 5f64.powi(n) * x;
    for _ in 0..RENORM_MAX_ITER {
        x = decimate_down(x)?.value;
        n += 1;
        let next = 5f64.powi(n) * x;
        if (next - scaled).abs() <= RENORM_TOL * next.abs() {
            return Ok(1.5 * next);
        }
        scaled = next;
    }
    Err(Error::NonConvergence {
        iterations: RENORM_MAX_ITER,
        context: format!("renormalizing graph eigenvalue {lambda} from level {level}"),
    })
}

/// Walks `λ ↦ λ(5 − λ)` upward from `level` until a birth value (5 or 6) or
/// `min_level` is reached. Returns the birth level and the graph eigenvalues
/// from birth to `level`.
pub fn trace_birth(lambda: f64, level: usize, min_level: usize) -> (usize, Vec<f64>) {
    // Upward steps amplify rounding by at most 5 per level.
    const BIRTH_TOL: f64 = 1e-6;
    let mut history = vec![lambda];
    let mut l = level;
    let mut current = lambda;
    while l > min_level && (current - 5.0).abs() > BIRTH_TOL && (current - 6.0).abs() > BIRTH_TOL {
        current = decimate_up(current);
        history.push(current);
        l -= 1;
    }
    history.reverse();
    (l, history)
}

/// Largest eigen-equation defect of real values on `V_m`.
///
/// Interior rows always count; boundary rows use the weighted Neumann form and
/// count only where the function is nonzero.
pub(crate) fn eigen_defect(vertices: &VertexSet, level: usize, u: &[f64], lambda: f64) -> f64 {
    let mut rows = neg_laplacian_rows(vertices, level, u);
    for b in vertices.boundary_ids() {
        rows[b] = if u[b] != 0.0 {
            2.0 * rows[b]
        } else {
            lambda * u[b]
        };
    }
    rows.iter()
        .zip(u)
        .map(|(r, x)| (r - lambda * x).abs())
        .fold(0.0, f64::max)
}

/// Extends real values on `V_m` to `V_{m+1}` without validation.
pub(crate) fn extend_real(vertices: &VertexSet, level: usize, u: &[f64], lambda: f64) -> Vec<f64> {
    let mut out = vec![0.0; vertex_count(level + 1)];
    out[..u.len()].copy_from_slice(u);
    let denom = (2.0 - lambda) * (5.0 - lambda);
    let coarse = vertices.cells(level);
    let fine = vertices.cells(level + 1);
    for (ci, c) in coarse.iter().enumerate() {
        for opposite in 0..3 {
            let (i1, i2) = ((opposite + 1) % 3, (opposite + 2) % 3);
            // Corner i2 of child i1 is the midpoint of corners i1 and i2.
            let y = fine[3 * ci + i1][i2];
            out[y] = ((4.0 - lambda) * (u[c[i1]] + u[c[i2]]) + 2.0 * u[c[opposite]]) / denom;
        }
    }
    out
}

pub(crate) fn check_extension(
    vertices: &VertexSet,
    level: usize,
    u: &[f64],
    lambda_next: f64,
) -> Result<()> {
    if is_forbidden(lambda_next) {
        return Err(Error::ForbiddenEigenvalue(lambda_next));
    }
    if level >= vertices.level() {
        return Err(Error::LevelMismatch {
            expected: level + 1,
            found: vertices.level(),
        });
    }
    let lambda = decimate_up(lambda_next);
    let scale = u
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let defect = eigen_defect(vertices, level, u, lambda);
    if defect > 1e-9 * scale * lambda.max(1.0) {
        return Err(Error::Precondition(format!(
            "input is not a level-{level} eigenfunction for eigenvalue {lambda}: defect {defect:e}"
        )));
    }
    Ok(())
}

/// Extends an eigenfunction on `V_m` to `V_{m+1}` for the graph eigenvalue
/// `lambda_next` at level `m+1`. Old vertices keep their values.
pub fn extend_eigenfunction(
    u: &GraphFunction,
    lambda_next: f64,
    vertices: &VertexSet,
) -> Result<GraphFunction> {
    let level = u.level();
    let (re, im) = u.split();
    check_extension(vertices, level, &re, lambda_next)?;
    check_extension(vertices, level, &im, lambda_next)?;
    let re = extend_real(vertices, level, &re, lambda_next);
    let im = extend_real(vertices, level, &im, lambda_next);
    GraphFunction::new(
        level + 1,
        re.into_iter()
            .zip(im)
            .map(|(a, b)| Complex64::new(a, b))
            .collect(),
    )
}
