//! Reconstruction quality metrics: NMSE and windowed SSIM on magnitudes.

use crate::error::{ReconError, Result};
use crate::grid::ComplexImage;

/// Per-scan evaluation result.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub scan_id: String,
    pub nmse: f64,
    pub ssim: f64,
}

/// Normalized mean square error: `||ref - rec||^2 / ||ref||^2` over complex
/// values.
pub fn nmse(reference: &ComplexImage, recon: &ComplexImage) -> Result<f64> {
    if !reference.same_shape(recon) {
        return Err(ReconError::shape("nmse shape mismatch"));
    }
    let ref_energy: f64 = reference.data().iter().map(|v| v.norm_sqr()).sum();
    if ref_energy == 0.0 {
        return Err(ReconError::Normalization(
            "nmse reference is identically zero".into(),
        ));
    }
    let err_energy: f64 = reference
        .data()
        .iter()
        .zip(recon.data().iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(err_energy / ref_energy)
}

/// SSIM configuration. The defaults follow the common convention: uniform
/// 7x7 window, stabilizers (0.01 L)^2 and (0.03 L)^2 with L the maximum
/// reference magnitude unless pinned explicitly.
#[derive(Debug, Clone)]
pub struct SsimConfig {
    pub window: usize,
    /// Dynamic range L; `None` takes the maximum magnitude of the reference.
    pub dynamic_range: Option<f64>,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window: 7,
            dynamic_range: None,
        }
    }
}

/// Mean local SSIM over magnitude images, full-overlap windows only.
pub fn ssim(reference: &ComplexImage, recon: &ComplexImage) -> Result<f64> {
    ssim_with(reference, recon, &SsimConfig::default())
}

pub fn ssim_with(reference: &ComplexImage, recon: &ComplexImage, cfg: &SsimConfig) -> Result<f64> {
    if !reference.same_shape(recon) {
        return Err(ReconError::shape("ssim shape mismatch"));
    }
    let (rows, cols) = reference.shape();
    let win = cfg.window;
    if win == 0 || rows < win || cols < win {
        return Err(ReconError::shape(format!(
            "image {rows}x{cols} smaller than the {win}x{win} ssim window"
        )));
    }

    let a: Vec<f64> = reference.data().iter().map(|v| v.norm()).collect();
    let b: Vec<f64> = recon.data().iter().map(|v| v.norm()).collect();

    let dynamic_range = cfg
        .dynamic_range
        .unwrap_or_else(|| a.iter().copied().fold(0.0, f64::max));
    let c1 = (0.01 * dynamic_range).powi(2);
    let c2 = (0.03 * dynamic_range).powi(2);

    // Summed-area tables over a, b, a^2, b^2, ab give O(1) window sums.
    let sat = |values: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let mut table = vec![0.0; (rows + 1) * (cols + 1)];
        for r in 0..rows {
            for c in 0..cols {
                table[(r + 1) * (cols + 1) + (c + 1)] = values(r * cols + c)
                    + table[r * (cols + 1) + (c + 1)]
                    + table[(r + 1) * (cols + 1) + c]
                    - table[r * (cols + 1) + c];
            }
        }
        table
    };
    let t_a = sat(&|i| a[i]);
    let t_b = sat(&|i| b[i]);
    let t_aa = sat(&|i| a[i] * a[i]);
    let t_bb = sat(&|i| b[i] * b[i]);
    let t_ab = sat(&|i| a[i] * b[i]);
    let window_sum = |t: &[f64], r: usize, c: usize| {
        t[(r + win) * (cols + 1) + (c + win)] - t[r * (cols + 1) + (c + win)]
            - t[(r + win) * (cols + 1) + c]
            + t[r * (cols + 1) + c]
    };

    let n = (win * win) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=rows - win {
        for c in 0..=cols - win {
            let mu1 = window_sum(&t_a, r, c) / n;
            let mu2 = window_sum(&t_b, r, c) / n;
            let var1 = window_sum(&t_aa, r, c) / n - mu1 * mu1;
            let var2 = window_sum(&t_bb, r, c) / n - mu2 * mu2;
            let cov = window_sum(&t_ab, r, c) / n - mu1 * mu2;
            let num = (2.0 * mu1 * mu2 + c1) * (2.0 * cov + c2);
            let den = (mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}
