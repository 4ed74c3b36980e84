//! Binary PGM (P5) export of magnitude images, min-max normalized per image.

use recon_core::{ComplexImage, Result};
use std::path::Path;

pub fn write_pgm(path: &Path, image: &ComplexImage) -> Result<()> {
    let (rows, cols) = image.shape();
    let mags: Vec<f64> = image.data().iter().map(|v| v.norm()).collect();
    let min = mags.iter().copied().fold(f64::INFINITY, f64::min);
    let max = mags.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;

    let mut out = Vec::with_capacity(rows * cols + 32);
    out.extend_from_slice(format!("P5\n{cols} {rows}\n255\n").as_bytes());
    if span > 0.0 {
        out.extend(mags.iter().map(|&m| ((m - min) / span * 255.0).round() as u8));
    } else {
        out.extend(std::iter::repeat_n(0u8, rows * cols));
    }
    std::fs::write(path, out)?;
    Ok(())
}
