//! Conjugate-gradient solves of the data-consistency subproblem and the
//! classical reconstruction baselines.
//!
//! `dc_solve` handles the regularized normal equations
//! `(E^H E + mu I) x = E^H y + mu z`, the system every data-consistency unit
//! of the unrolled network solves. `cg_sense` is the mu = 0, z = 0 special
//! case from zero init. The TGV baseline lives in [`tgv`].

mod tgv;

pub use tgv::{tgv_penalty, tgv_reconstruct, tgv_reconstruct_with_report, TgvParams, TgvReport};

use crate::encoding::SenseOperator;
use crate::error::{ReconError, Result};
use crate::grid::{vdot, ComplexGrid, ComplexImage, KSpaceGrid};
use num_complex::Complex64;

/// Diagnostics from one conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgReport {
    pub iterations_run: usize,
    pub final_residual_norm: f64,
    pub converged: bool,
    /// Residual l2 norm before each iteration, final value last.
    pub residual_history: Vec<f64>,
}

/// Solve `(E^H E + mu I) x = rhs` by CG from the given start iterate.
///
/// With `tol = 0` the solve runs the full iteration budget (the fixed-budget
/// mode the unrolled network uses), stopping early only if the residual is
/// exactly zero.
pub(crate) fn cg_normal_plus_identity(
    op: &SenseOperator,
    rhs: &ComplexImage,
    start: &ComplexImage,
    mu: f64,
    max_iters: usize,
    tol: f64,
) -> Result<(ComplexImage, CgReport)> {
    let apply = |v: &ComplexGrid| -> Result<ComplexGrid> {
        let mut nv = op.normal(v)?;
        if mu != 0.0 {
            nv.axpy(Complex64::new(mu, 0.0), v)?;
        }
        Ok(nv)
    };

    let rhs_norm = rhs.l2();
    let mut x = start.clone();
    let mut r = rhs.sub(&apply(&x)?)?;
    let mut p = r.clone();
    let mut rs = r.l2().powi(2);
    let mut history = vec![rs.sqrt()];
    let threshold = tol * rhs_norm;

    let mut iterations = 0;
    while iterations < max_iters {
        let rnorm = rs.sqrt();
        if rnorm <= threshold || rs == 0.0 {
            break;
        }
        let ap = apply(&p)?;
        let denom = vdot(p.data(), ap.data())?.re;
        if denom <= 0.0 {
            // p in the nullspace of a singular (mu = 0) system; the iterate
            // cannot improve along it.
            break;
        }
        let alpha = Complex64::new(rs / denom, 0.0);
        x.axpy(alpha, &p)?;
        r.axpy(-alpha, &ap)?;
        let rs_new = r.l2().powi(2);
        let beta = rs_new / rs;
        p = r.add(&p.scale_real(beta))?;
        rs = rs_new;
        iterations += 1;
        history.push(rs.sqrt());
    }

    let final_norm = rs.sqrt();
    Ok((
        x,
        CgReport {
            iterations_run: iterations,
            final_residual_norm: final_norm,
            converged: final_norm <= threshold || rs == 0.0,
            residual_history: history,
        },
    ))
}

/// Data-consistency solve: argmin_x ||y - E x||^2 + mu ||x - z||^2, i.e. CG on
/// `(E^H E + mu I) x = E^H y + mu z`, started from `z`.
///
/// With mu = 0 the system may be singular; CG then converges toward the
/// least-norm behavior on the reachable subspace.
pub fn dc_solve(
    op: &SenseOperator,
    y: &[KSpaceGrid],
    z: &ComplexImage,
    mu: f64,
    max_iters: usize,
    tol: f64,
) -> Result<(ComplexImage, CgReport)> {
    if mu < 0.0 {
        return Err(ReconError::parameter("mu", "must be nonnegative"));
    }
    op.check_measurements(y)?;
    if z.shape() != op.shape() {
        return Err(ReconError::shape("dc_solve start image shape mismatch"));
    }
    z.validate_finite()?;
    for grid in y {
        grid.validate_finite()?;
    }

    let mut rhs = op.adjoint(y)?;
    if mu != 0.0 {
        rhs.axpy(Complex64::new(mu, 0.0), z)?;
    }
    cg_normal_plus_identity(op, &rhs, z, mu, max_iters, tol)
}

/// CG-SENSE: unregularized normal equations from zero initialization.
pub fn cg_sense(
    op: &SenseOperator,
    y: &[KSpaceGrid],
    max_iters: usize,
    tol: f64,
) -> Result<(ComplexImage, CgReport)> {
    let (rows, cols) = op.shape();
    dc_solve(op, y, &ComplexGrid::zeros(rows, cols), 0.0, max_iters, tol)
}
