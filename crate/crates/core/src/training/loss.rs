//! Training losses: the normalized l1-l2 distance and its image/k-space
//! compositions.

use crate::encoding::{restrict_to_mask, SenseOperator};
use crate::error::{ReconError, Result};
use crate::grid::{norms, ComplexImage, KSpaceGrid};
use crate::network::{unrolled_forward, NetConfig, NetworkParams};
use num_complex::Complex64;

/// Normalized l1-l2 loss: `||u-v||_2/||u||_2 + ||u-v||_1/||u||_1`.
///
/// `u` is the reference (measured k-space points or a reference image), `v`
/// the prediction. Identical inputs give 0; `v = 0` gives exactly 2.
pub fn norm_l1l2_loss(u: &[Complex64], v: &[Complex64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(ReconError::shape(format!(
            "loss arguments differ in length: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let (u_l1, u_l2) = norms(u)?;
    if u_l2 == 0.0 {
        return Err(ReconError::Normalization(
            "loss reference is identically zero".into(),
        ));
    }
    let diff: Vec<Complex64> = u.iter().zip(v.iter()).map(|(a, b)| a - b).collect();
    let (d_l1, d_l2) = norms(&diff)?;
    Ok(d_l2 / u_l2 + d_l1 / u_l1)
}

/// Gradient of [`norm_l1l2_loss`] with respect to `v`, packed as complex
/// numbers (real part = d/d v_re, imaginary part = d/d v_im).
///
/// The l2 term's gradient is taken as 0 at an exact fit, and the l1
/// subgradient at a zero component is 0.
pub(crate) fn norm_l1l2_grad(u: &[Complex64], v: &[Complex64]) -> Result<Vec<Complex64>> {
    if u.len() != v.len() {
        return Err(ReconError::shape("loss gradient length mismatch"));
    }
    let (u_l1, u_l2) = norms(u)?;
    if u_l2 == 0.0 {
        return Err(ReconError::Normalization(
            "loss reference is identically zero".into(),
        ));
    }
    let diff: Vec<Complex64> = v.iter().zip(u.iter()).map(|(b, a)| b - a).collect();
    let d_l2 = diff.iter().map(|d| d.norm_sqr()).sum::<f64>().sqrt();
    Ok(diff
        .iter()
        .map(|d| {
            let mut g = Complex64::new(0.0, 0.0);
            if d_l2 > 0.0 {
                g += d / (d_l2 * u_l2);
            }
            let m = d.norm();
            if m > 0.0 {
                g += d / (m * u_l1);
            }
            g
        })
        .collect())
}

/// Self-supervised loss: run the network on the data-consistency subset, map
/// the output through the loss-subset encoder, and compare against the loss-
/// subset measurements.
pub fn selfsup_loss(
    params: &NetworkParams,
    cfg: &NetConfig,
    op_dc: &SenseOperator,
    y_dc: &[KSpaceGrid],
    op_loss: &SenseOperator,
    y_loss: &[KSpaceGrid],
) -> Result<f64> {
    if op_dc.shape() != op_loss.shape() {
        return Err(ReconError::shape(
            "data-consistency and loss operators disagree on shape",
        ));
    }
    let x = unrolled_forward(params, cfg, op_dc, y_dc)?;
    let pred = op_loss.forward(&x)?;
    let v = restrict_to_mask(&pred, op_loss.mask());
    let u = restrict_to_mask(y_loss, op_loss.mask());
    norm_l1l2_loss(&u, &v)
}

/// Supervised loss: network output against a reference image, both flattened.
pub fn supervised_loss(
    params: &NetworkParams,
    cfg: &NetConfig,
    op: &SenseOperator,
    y: &[KSpaceGrid],
    x_ref: &ComplexImage,
) -> Result<f64> {
    if x_ref.shape() != op.shape() {
        return Err(ReconError::shape("reference image shape mismatch"));
    }
    let x = unrolled_forward(params, cfg, op, y)?;
    norm_l1l2_loss(x_ref.data(), x.data())
}
