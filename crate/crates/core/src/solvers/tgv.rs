//! Second-order TGV-regularized reconstruction via a first-order primal-dual
//! scheme.
//!
//! Minimizes `||E x - y||^2 + TGV2_{a1,a0}(x)` over complex images, where
//! `TGV2(x) = min_v a1 * sum |grad(x) - v| + a0 * sum |sym_grad(v)|`. The
//! auxiliary field `v` absorbs first-order (affine) structure, so the penalty
//! vanishes on affine images away from the boundary. Gradients are forward
//! differences with Neumann boundaries; the symmetric-gradient off-diagonal
//! carries weight 2 in norms and pairings (Frobenius convention).

use crate::encoding::SenseOperator;
use crate::error::{ReconError, Result};
use crate::grid::{ComplexGrid, ComplexImage, KSpaceGrid};

/// Primal and dual step sizes; 12 bounds the squared norm of the TGV cascade.
const STEP: f64 = 0.288_675_134_594_812_9; // 1/sqrt(12)

#[derive(Debug, Clone)]
pub struct TgvParams {
    /// Weight of the first-order term |grad(x) - v|.
    pub alpha1: f64,
    /// Weight of the second-order term |sym_grad(v)|.
    pub alpha0: f64,
    pub iterations: usize,
    /// Objective checkpoint spacing for the convergence trace.
    pub check_every: usize,
}

impl Default for TgvParams {
    fn default() -> Self {
        TgvParams {
            alpha1: 2e-3,
            alpha0: 4e-3,
            iterations: 500,
            check_every: 50,
        }
    }
}

/// Objective trace for a TGV solve, evaluated at running-average iterates.
#[derive(Debug, Clone)]
pub struct TgvReport {
    pub iterations_run: usize,
    /// Primal objective at each checkpoint (every `check_every` iterations).
    pub objective_checkpoints: Vec<f64>,
}

struct VectorField {
    a: ComplexGrid,
    b: ComplexGrid,
}

impl VectorField {
    fn zeros(rows: usize, cols: usize) -> Self {
        VectorField {
            a: ComplexGrid::zeros(rows, cols),
            b: ComplexGrid::zeros(rows, cols),
        }
    }
}

/// Forward difference along rows, zero on the last row (Neumann).
fn d_rows(x: &ComplexGrid) -> ComplexGrid {
    let (rows, cols) = x.shape();
    let mut out = ComplexGrid::zeros(rows, cols);
    for r in 0..rows.saturating_sub(1) {
        for c in 0..cols {
            out.set(r, c, x.at(r + 1, c) - x.at(r, c));
        }
    }
    out
}

/// Forward difference along columns, zero on the last column.
fn d_cols(x: &ComplexGrid) -> ComplexGrid {
    let (rows, cols) = x.shape();
    let mut out = ComplexGrid::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols.saturating_sub(1) {
            out.set(r, c, x.at(r, c + 1) - x.at(r, c));
        }
    }
    out
}

/// Adjoint of `d_rows`.
fn d_rows_adj(p: &ComplexGrid) -> ComplexGrid {
    let (rows, cols) = p.shape();
    let mut out = ComplexGrid::zeros(rows, cols);
    if rows == 1 {
        return out;
    }
    for c in 0..cols {
        out.set(0, c, -p.at(0, c));
        for r in 1..rows - 1 {
            out.set(r, c, p.at(r - 1, c) - p.at(r, c));
        }
        out.set(rows - 1, c, p.at(rows - 2, c));
    }
    out
}

/// Adjoint of `d_cols`.
fn d_cols_adj(p: &ComplexGrid) -> ComplexGrid {
    let (rows, cols) = p.shape();
    let mut out = ComplexGrid::zeros(rows, cols);
    if cols == 1 {
        return out;
    }
    for r in 0..rows {
        out.set(r, 0, -p.at(r, 0));
        for c in 1..cols - 1 {
            out.set(r, c, p.at(r, c - 1) - p.at(r, c));
        }
        out.set(r, cols - 1, p.at(r, cols - 2));
    }
    out
}

/// Symmetric gradient of a vector field: (Dr a, Dc b, (Dc a + Dr b)/2).
fn sym_grad(v: &VectorField) -> (ComplexGrid, ComplexGrid, ComplexGrid) {
    let e11 = d_rows(&v.a);
    let e22 = d_cols(&v.b);
    let mut e12 = d_cols(&v.a);
    let drb = d_rows(&v.b);
    for (x, y) in e12.data_mut().iter_mut().zip(drb.data().iter()) {
        *x = (*x + y) * 0.5;
    }
    (e11, e22, e12)
}

/// Adjoint of `sym_grad` under the weight-2 off-diagonal pairing.
fn sym_grad_adj(q11: &ComplexGrid, q22: &ComplexGrid, q12: &ComplexGrid) -> VectorField {
    let mut a = d_rows_adj(q11);
    let extra_a = d_cols_adj(q12);
    for (x, y) in a.data_mut().iter_mut().zip(extra_a.data().iter()) {
        *x += y;
    }
    let mut b = d_cols_adj(q22);
    let extra_b = d_rows_adj(q12);
    for (x, y) in b.data_mut().iter_mut().zip(extra_b.data().iter()) {
        *x += y;
    }
    VectorField { a, b }
}

/// Pointwise projection of a 2-field onto the radius-`alpha` ball.
fn project_pair(p: &mut VectorField, alpha: f64) {
    let n = p.a.len();
    for i in 0..n {
        let (pa, pb) = (p.a.data()[i], p.b.data()[i]);
        let norm = (pa.norm_sqr() + pb.norm_sqr()).sqrt();
        if norm > alpha {
            let s = alpha / norm;
            p.a.data_mut()[i] = pa * s;
            p.b.data_mut()[i] = pb * s;
        }
    }
}

/// Pointwise projection of a symmetric tensor field onto the radius-`alpha`
/// ball of the weighted Frobenius norm.
fn project_sym(q11: &mut ComplexGrid, q22: &mut ComplexGrid, q12: &mut ComplexGrid, alpha: f64) {
    let n = q11.len();
    for i in 0..n {
        let (a, b, c) = (q11.data()[i], q22.data()[i], q12.data()[i]);
        let norm = (a.norm_sqr() + b.norm_sqr() + 2.0 * c.norm_sqr()).sqrt();
        if norm > alpha {
            let s = alpha / norm;
            q11.data_mut()[i] = a * s;
            q22.data_mut()[i] = b * s;
            q12.data_mut()[i] = c * s;
        }
    }
}

/// TGV2 penalty at a given pair (x, v), full grid.
pub fn tgv_penalty(x: &ComplexImage, v_a: &ComplexGrid, v_b: &ComplexGrid, alpha1: f64, alpha0: f64) -> f64 {
    let v = VectorField {
        a: v_a.clone(),
        b: v_b.clone(),
    };
    let ga = d_rows(x);
    let gb = d_cols(x);
    let mut first = 0.0;
    for i in 0..x.len() {
        let da = ga.data()[i] - v.a.data()[i];
        let db = gb.data()[i] - v.b.data()[i];
        first += (da.norm_sqr() + db.norm_sqr()).sqrt();
    }
    let (e11, e22, e12) = sym_grad(&v);
    let mut second = 0.0;
    for i in 0..x.len() {
        second += (e11.data()[i].norm_sqr()
            + e22.data()[i].norm_sqr()
            + 2.0 * e12.data()[i].norm_sqr())
        .sqrt();
    }
    alpha1 * first + alpha0 * second
}

/// TGV-regularized reconstruction. Returns the final primal iterate.
pub fn tgv_reconstruct(
    op: &SenseOperator,
    y: &[KSpaceGrid],
    alpha1: f64,
    alpha0: f64,
    iterations: usize,
) -> Result<ComplexImage> {
    let params = TgvParams {
        alpha1,
        alpha0,
        iterations,
        ..TgvParams::default()
    };
    tgv_reconstruct_with_report(op, y, &params).map(|(x, _)| x)
}

pub fn tgv_reconstruct_with_report(
    op: &SenseOperator,
    y: &[KSpaceGrid],
    params: &TgvParams,
) -> Result<(ComplexImage, TgvReport)> {
    if params.alpha1 <= 0.0 {
        return Err(ReconError::parameter("tgv-alpha1", "must be positive"));
    }
    if params.alpha0 <= 0.0 {
        return Err(ReconError::parameter("tgv-alpha0", "must be positive"));
    }
    op.check_measurements(y)?;
    let (rows, cols) = op.shape();
    let (sigma, tau) = (STEP, STEP);

    let mut x = ComplexGrid::zeros(rows, cols);
    let mut v = VectorField::zeros(rows, cols);
    let mut x_bar = x.clone();
    let mut v_bar = VectorField::zeros(rows, cols);

    let mut dual_data: Vec<KSpaceGrid> = vec![ComplexGrid::zeros(rows, cols); op.ncoils()];
    let mut p = VectorField::zeros(rows, cols);
    let mut q11 = ComplexGrid::zeros(rows, cols);
    let mut q22 = ComplexGrid::zeros(rows, cols);
    let mut q12 = ComplexGrid::zeros(rows, cols);

    // Running sums for the ergodic (averaged) iterate used in the objective
    // trace.
    let mut x_sum = ComplexGrid::zeros(rows, cols);
    let mut v_sum = VectorField::zeros(rows, cols);
    let mut checkpoints = Vec::new();

    for it in 1..=params.iterations {
        // Dual ascent at the over-relaxed primal point.
        let ex = op.forward(&x_bar)?;
        for ((d, e), yc) in dual_data.iter_mut().zip(ex.iter()).zip(y.iter()) {
            for ((dv, ev), yv) in d
                .data_mut()
                .iter_mut()
                .zip(e.data().iter())
                .zip(yc.data().iter())
            {
                *dv = (*dv + sigma * (ev - yv)) / (1.0 + sigma / 2.0);
            }
        }

        let gx_a = d_rows(&x_bar);
        let gx_b = d_cols(&x_bar);
        for i in 0..rows * cols {
            p.a.data_mut()[i] += sigma * (gx_a.data()[i] - v_bar.a.data()[i]);
            p.b.data_mut()[i] += sigma * (gx_b.data()[i] - v_bar.b.data()[i]);
        }
        project_pair(&mut p, params.alpha1);

        let (e11, e22, e12) = sym_grad(&v_bar);
        for i in 0..rows * cols {
            q11.data_mut()[i] += sigma * e11.data()[i];
            q22.data_mut()[i] += sigma * e22.data()[i];
            q12.data_mut()[i] += sigma * e12.data()[i];
        }
        project_sym(&mut q11, &mut q22, &mut q12, params.alpha0);

        // Primal descent.
        let ehr = op.adjoint(&dual_data)?;
        let div_p_a = d_rows_adj(&p.a);
        let div_p_b = d_cols_adj(&p.b);
        let mut x_new = x.clone();
        for i in 0..rows * cols {
            x_new.data_mut()[i] -=
                tau * (ehr.data()[i] + div_p_a.data()[i] + div_p_b.data()[i]);
        }

        let eq = sym_grad_adj(&q11, &q22, &q12);
        let mut v_new = VectorField {
            a: v.a.clone(),
            b: v.b.clone(),
        };
        for i in 0..rows * cols {
            v_new.a.data_mut()[i] -= tau * (eq.a.data()[i] - p.a.data()[i]);
            v_new.b.data_mut()[i] -= tau * (eq.b.data()[i] - p.b.data()[i]);
        }

        // Over-relaxation and shift.
        for i in 0..rows * cols {
            x_bar.data_mut()[i] = 2.0 * x_new.data()[i] - x.data()[i];
            v_bar.a.data_mut()[i] = 2.0 * v_new.a.data()[i] - v.a.data()[i];
            v_bar.b.data_mut()[i] = 2.0 * v_new.b.data()[i] - v.b.data()[i];
        }
        x = x_new;
        v = v_new;

        for i in 0..rows * cols {
            x_sum.data_mut()[i] += x.data()[i];
            v_sum.a.data_mut()[i] += v.a.data()[i];
            v_sum.b.data_mut()[i] += v.b.data()[i];
        }

        if it % params.check_every == 0 {
            let inv = 1.0 / it as f64;
            let x_avg = x_sum.scale_real(inv);
            let va_avg = v_sum.a.scale_real(inv);
            let vb_avg = v_sum.b.scale_real(inv);
            let residual = op.forward(&x_avg)?;
            let mut data_term = 0.0;
            for (e, yc) in residual.iter().zip(y.iter()) {
                for (ev, yv) in e.data().iter().zip(yc.data().iter()) {
                    data_term += (ev - yv).norm_sqr();
                }
            }
            checkpoints.push(
                data_term + tgv_penalty(&x_avg, &va_avg, &vb_avg, params.alpha1, params.alpha0),
            );
        }
    }

    Ok((
        x,
        TgvReport {
            iterations_run: params.iterations,
            objective_checkpoints: checkpoints,
        },
    ))
}
