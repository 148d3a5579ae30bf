//! First eigenvalue of the linear nonlocal operator.
//!
//! The operator is `A u = h u - J * (u restricted to the support)`, symmetric
//! with respect to the cell-volume inner product because the kernel is even.
//! The smallest eigenvalue is found by power iteration on the shifted
//! operator `sigma I - A`; applications cost one convolution each, so no
//! matrix is ever formed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::MaskedField;
use crate::kernel::{convolve, KernelStencil};

/// Converged eigenpair of the nonlocal operator.
#[derive(Debug, Clone, Serialize)]
pub struct EigenResult {
    pub lambda1: f64,
    pub iterations: usize,
    /// `||A v - lambda1 v|| / ||v||` at exit.
    pub residual: f64,
    #[serde(skip)]
    pub eigenfield: MaskedField,
}

pub const LAMBDA1_MAX_ITER: usize = 10_000;

/// Applies `A u = h u - J * u` with `u` masked to the support.
fn apply_operator(
    j: &KernelStencil,
    h_field: &MaskedField,
    u: &MaskedField,
) -> Result<MaskedField> {
    let conv = convolve(j, u, 0.0)?;
    let mut out = MaskedField::zeros(&u.grid, u.mask.clone())?;
    for k in 0..u.grid.len() {
        if u.mask[k] {
            out.values[k] = h_field.values[k] * u.values[k] - conv.values[k];
        }
    }
    Ok(out)
}

fn inner(a: &MaskedField, b: &MaskedField) -> f64 {
    let s: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    s * a.grid.cell_volume
}

/// Smallest eigenvalue of `A u = h u - J * u` on fields supported by the
/// mask, by power iteration on `sigma I - A` with `sigma = max h + 1`.
///
/// Converges when the relative eigenvalue change drops below `tol` and the
/// residual below `10 tol`; errors out after the iteration budget otherwise.
/// The constant start vector has a positive overlap with the dominant
/// eigenvector of the shifted operator, which is entrywise nonnegative.
pub fn lambda1(
    j: &KernelStencil,
    h_field: &MaskedField,
    support: &[bool],
    tol: f64,
) -> Result<EigenResult> {
    let g = &h_field.grid;
    if j.grid != *g {
        return Err(Error::GridMismatch(
            "kernel grid differs from field grid".to_string(),
        ));
    }
    if support.len() != g.len() {
        return Err(Error::GridMismatch(
            "support mask length mismatch".to_string(),
        ));
    }
    if tol <= 0.0 {
        return Err(Error::Config(
            "eigenvalue tolerance must be positive".to_string(),
        ));
    }
    if !support.iter().any(|&m| m) {
        return Err(Error::Config("empty support mask".to_string()));
    }
    let sigma = support
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(k, _)| h_field.values[k])
        .fold(f64::NEG_INFINITY, f64::max)
        + 1.0;

    let mut u = MaskedField::constant(g, support.to_vec(), 1.0)?;
    let norm = u.l2_norm();
    for v in &mut u.values {
        *v /= norm;
    }
    let mut lambda_prev = f64::INFINITY;
    for it in 1..=LAMBDA1_MAX_ITER {
        let au = apply_operator(j, h_field, &u)?;
        // shifted application B u = sigma u - A u
        let mut bu = MaskedField::zeros(g, u.mask.clone())?;
        for k in 0..g.len() {
            if u.mask[k] {
                bu.values[k] = sigma * u.values[k] - au.values[k];
            }
        }
        let mu = inner(&u, &bu);
        let lambda = sigma - mu;
        // residual of the unshifted problem: A u - lambda u = mu u - B u
        let mut res2 = 0.0;
        for k in 0..g.len() {
            if u.mask[k] {
                let r = mu * u.values[k] - bu.values[k];
                res2 += r * r;
            }
        }
        let residual = (res2 * g.cell_volume).sqrt();
        let scale = lambda.abs().max(1.0);
        if (lambda - lambda_prev).abs() <= tol * scale && residual <= 10.0 * tol {
            return Ok(EigenResult {
                lambda1: lambda,
                iterations: it,
                residual,
                eigenfield: u,
            });
        }
        lambda_prev = lambda;
        let bnorm = bu.l2_norm();
        if bnorm == 0.0 {
            // B u = 0 means u is an exact eigenvector with eigenvalue sigma
            return Ok(EigenResult {
                lambda1: lambda,
                iterations: it,
                residual,
                eigenfield: u,
            });
        }
        for v in &mut bu.values {
            *v /= bnorm;
        }
        u = bu;
    }
    Err(Error::Solver(format!(
        "power iteration did not converge in {LAMBDA1_MAX_ITER} iterations (last residual above tolerance)"
    )))
}

/// Rayleigh quotient `<u, h u - J * u> / <u, u>` of the operator at `u`.
pub fn rayleigh_quotient(j: &KernelStencil, h_field: &MaskedField, u: &MaskedField) -> Result<f64> {
    let uu = inner(u, u);
    if uu == 0.0 {
        return Err(Error::Config(
            "rayleigh quotient of the zero field".to_string(),
        ));
    }
    let au = apply_operator(j, h_field, u)?;
    Ok(inner(u, &au) / uu)
}
