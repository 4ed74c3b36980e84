//! Complex 2-D grids and the centered, unitary FFT.
//!
//! Every image- and frequency-domain object in this crate is a row-major
//! `ComplexGrid` whose dimensions are powers of two. The transform between the
//! two domains is `fft2c`: a radix-2 FFT with unitary normalization
//! (1/sqrt(rows*cols) in each direction) and the DC component at
//! (rows/2, cols/2). Unitarity makes the encoding operator and its adjoint
//! exact transposes of each other, which the solvers rely on.

use crate::error::{ReconError, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// A 2-D complex array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

/// Image-domain role of a `ComplexGrid`.
pub type ComplexImage = ComplexGrid;
/// Frequency-domain role of a `ComplexGrid`.
pub type KSpaceGrid = ComplexGrid;

/// Transform direction for [`fft2c`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FftDirection {
    Forward,
    Inverse,
}

fn is_power_of_two(n: usize) -> bool {
    n > 0 && n & (n - 1) == 0
}

impl ComplexGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(ReconError::shape("grid dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(ReconError::shape(format!(
                "data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(ComplexGrid { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexGrid {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn same_shape(&self, other: &ComplexGrid) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn validate_finite(&self) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(ReconError::Numeric(format!(
                    "non-finite entry at flat index {i}"
                )));
            }
        }
        Ok(())
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &ComplexGrid) -> Result<ComplexGrid> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Elementwise difference; shapes must match.
    pub fn sub(&self, other: &ComplexGrid) -> Result<ComplexGrid> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Elementwise product; shapes must match.
    pub fn mul(&self, other: &ComplexGrid) -> Result<ComplexGrid> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: Complex64) -> ComplexGrid {
        ComplexGrid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> ComplexGrid {
        self.scale(Complex64::new(s, 0.0))
    }

    /// self += alpha * other, in place.
    pub fn axpy(&mut self, alpha: Complex64, other: &ComplexGrid) -> Result<()> {
        if !self.same_shape(other) {
            return Err(ReconError::shape("axpy shape mismatch"));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * b;
        }
        Ok(())
    }

    fn zip_with(
        &self,
        other: &ComplexGrid,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<ComplexGrid> {
        if !self.same_shape(other) {
            return Err(ReconError::shape(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(ComplexGrid {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn l2(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Rotate both axes by half their length. For even dimensions this is the
    /// standard fftshift, which is its own inverse.
    fn shift_half(&self) -> ComplexGrid {
        let (rs, cs) = (self.rows / 2, self.cols / 2);
        let mut out = ComplexGrid::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let rr = (r + rs) % self.rows;
            for c in 0..self.cols {
                let cc = (c + cs) % self.cols;
                out.data[rr * self.cols + cc] = self.data[r * self.cols + c];
            }
        }
        out
    }
}

/// Centered, orthonormal 2-D FFT on power-of-two grids.
///
/// The DC component sits at index (rows/2, cols/2) in both domains, matching
/// masks that place the autocalibration block at the grid center. Forward and
/// inverse are unitary, so `fft2c(fft2c(x, Forward), Inverse) == x` up to
/// roundoff and Parseval holds exactly in either direction.
pub fn fft2c(img: &ComplexGrid, direction: FftDirection) -> Result<ComplexGrid> {
    if !is_power_of_two(img.rows) || !is_power_of_two(img.cols) {
        return Err(ReconError::shape(format!(
            "fft2c requires power-of-two dimensions, got {}x{}",
            img.rows, img.cols
        )));
    }
    let mut work = img.shift_half();
    fft_rows(&mut work, direction);
    let mut t = transpose(&work);
    fft_rows(&mut t, direction);
    work = transpose(&t);
    Ok(work.shift_half())
}

fn transpose(g: &ComplexGrid) -> ComplexGrid {
    let mut out = ComplexGrid::zeros(g.cols, g.rows);
    for r in 0..g.rows {
        for c in 0..g.cols {
            out.data[c * g.rows + r] = g.data[r * g.cols + c];
        }
    }
    out
}

fn fft_rows(g: &mut ComplexGrid, direction: FftDirection) {
    let n = g.cols;
    let twiddles = stage_twiddles(n, direction);
    let norm = 1.0 / (n as f64).sqrt();
    for row in g.data.chunks_mut(n) {
        fft_in_place(row, &twiddles);
        for v in row.iter_mut() {
            *v *= norm;
        }
    }
}

/// Twiddle factors for each radix-2 stage, largest stage last.
fn stage_twiddles(n: usize, direction: FftDirection) -> Vec<Vec<Complex64>> {
    let sign = match direction {
        FftDirection::Forward => -1.0,
        FftDirection::Inverse => 1.0,
    };
    let mut stages = Vec::new();
    let mut len = 2;
    while len <= n {
        let step = sign * 2.0 * PI / len as f64;
        let half = len / 2;
        let ws: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, step * k as f64))
            .collect();
        stages.push(ws);
        len *= 2;
    }
    stages
}

/// Iterative radix-2 Cooley-Tukey with bit-reversal reordering. Unnormalized;
/// callers apply 1/sqrt(n).
fn fft_in_place(data: &mut [Complex64], twiddles: &[Vec<Complex64>]) {
    let n = data.len();
    if n <= 1 {
        return;
    }
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 0..n - 1 {
        if i < j {
            data.swap(i, j);
        }
        let mut m = n >> 1;
        while m >= 1 && j & m != 0 {
            j ^= m;
            m >>= 1;
        }
        j |= m;
    }
    // Butterflies.
    for (stage, ws) in twiddles.iter().enumerate() {
        let len = 2usize << stage;
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = ws[k];
                let a = data[start + k];
                let b = data[start + k + half] * w;
                data[start + k] = a + b;
                data[start + k + half] = a - b;
            }
        }
    }
}

/// Conjugated dot product `sum conj(a_i) * b_i`.
pub fn vdot(a: &[Complex64], b: &[Complex64]) -> Result<Complex64> {
    if a.len() != b.len() {
        return Err(ReconError::shape(format!(
            "vdot length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.conj() * y)
        .sum())
}

/// l1 and l2 norms of a complex sequence, using the complex modulus per entry.
pub fn norms(a: &[Complex64]) -> Result<(f64, f64)> {
    if a.is_empty() {
        return Err(ReconError::shape("norms of empty sequence"));
    }
    let l1 = a.iter().map(|v| v.norm()).sum::<f64>();
    let l2 = a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    Ok((l1, l2))
}
