//! Multi-coil SENSE encoding: forward, adjoint and normal operators.
//!
//! The forward operator multiplies an image by each coil sensitivity, takes
//! the centered unitary FFT and zeroes unacquired locations. With
//! sum-of-squares-normalized maps and a full mask the operator is an isometry,
//! so `adjoint(forward(x)) == x`; that identity is what the solver and
//! training tests lean on.

use crate::error::{ReconError, Result};
use crate::grid::{fft2c, ComplexGrid, ComplexImage, FftDirection, KSpaceGrid};
use crate::sampling::SamplingMask;
use num_complex::Complex64;
use std::sync::Arc;

/// Tolerance for the sum-of-squares normalization check on input maps.
const SOS_TOL: f64 = 1e-6;

/// Per-coil sensitivity maps, required sum-of-squares normalized: at every
/// pixel where any map is nonzero, sum over coils of |map|^2 equals 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilSensitivities {
    maps: Vec<ComplexImage>,
}

impl CoilSensitivities {
    pub fn new(maps: Vec<ComplexImage>) -> Result<Self> {
        if maps.is_empty() {
            return Err(ReconError::shape("at least one coil map is required"));
        }
        let shape = maps[0].shape();
        for (c, m) in maps.iter().enumerate() {
            if m.shape() != shape {
                return Err(ReconError::shape(format!(
                    "coil {c} has shape {:?}, expected {:?}",
                    m.shape(),
                    shape
                )));
            }
            m.validate_finite()?;
        }
        for i in 0..maps[0].len() {
            let sos: f64 = maps.iter().map(|m| m.data()[i].norm_sqr()).sum();
            if sos != 0.0 && (sos - 1.0).abs() > SOS_TOL {
                return Err(ReconError::Normalization(format!(
                    "sum-of-squares {sos} at flat index {i}; maps must be SOS-normalized"
                )));
            }
        }
        Ok(CoilSensitivities { maps })
    }

    pub fn ncoils(&self) -> usize {
        self.maps.len()
    }

    pub fn maps(&self) -> &[ComplexImage] {
        &self.maps
    }

    pub fn shape(&self) -> (usize, usize) {
        self.maps[0].shape()
    }
}

/// Masked multi-coil encoding operator. Cheap to clone; coil maps are shared.
#[derive(Debug, Clone)]
pub struct SenseOperator {
    sens: Arc<CoilSensitivities>,
    mask: SamplingMask,
}

impl SenseOperator {
    pub fn new(sens: Arc<CoilSensitivities>, mask: SamplingMask) -> Result<Self> {
        if sens.shape() != mask.shape() {
            return Err(ReconError::shape(format!(
                "mask shape {:?} does not match coil maps {:?}",
                mask.shape(),
                sens.shape()
            )));
        }
        Ok(SenseOperator { sens, mask })
    }

    pub fn ncoils(&self) -> usize {
        self.sens.ncoils()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.sens.shape()
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn sens(&self) -> &Arc<CoilSensitivities> {
        &self.sens
    }

    /// Same coil maps, different mask.
    pub fn with_mask(&self, mask: SamplingMask) -> Result<SenseOperator> {
        SenseOperator::new(Arc::clone(&self.sens), mask)
    }

    /// Apply the encoding: per coil, mask . fft(sens_c . x). Unacquired
    /// entries are explicit zeros.
    pub fn forward(&self, x: &ComplexImage) -> Result<Vec<KSpaceGrid>> {
        if x.shape() != self.shape() {
            return Err(ReconError::shape(format!(
                "image shape {:?} does not match operator {:?}",
                x.shape(),
                self.shape()
            )));
        }
        let mut out = Vec::with_capacity(self.ncoils());
        for map in self.sens.maps() {
            let weighted = map.mul(x)?;
            let mut k = fft2c(&weighted, FftDirection::Forward)?;
            apply_mask(&mut k, &self.mask);
            out.push(k);
        }
        Ok(out)
    }

    /// Adjoint: sum over coils of conj(sens_c) . ifft(mask . y_c).
    pub fn adjoint(&self, y: &[KSpaceGrid]) -> Result<ComplexImage> {
        self.check_measurements(y)?;
        let (rows, cols) = self.shape();
        let mut acc = ComplexGrid::zeros(rows, cols);
        for (map, grid) in self.sens.maps().iter().zip(y.iter()) {
            let mut masked = grid.clone();
            apply_mask(&mut masked, &self.mask);
            let img = fft2c(&masked, FftDirection::Inverse)?;
            for (a, (m, v)) in acc
                .data_mut()
                .iter_mut()
                .zip(map.data().iter().zip(img.data().iter()))
            {
                *a += m.conj() * v;
            }
        }
        Ok(acc)
    }

    /// Gram operator adjoint(forward(x)) in one fused pass.
    pub fn normal(&self, x: &ComplexImage) -> Result<ComplexImage> {
        if x.shape() != self.shape() {
            return Err(ReconError::shape(format!(
                "image shape {:?} does not match operator {:?}",
                x.shape(),
                self.shape()
            )));
        }
        let (rows, cols) = self.shape();
        let mut acc = ComplexGrid::zeros(rows, cols);
        for map in self.sens.maps() {
            let weighted = map.mul(x)?;
            let mut k = fft2c(&weighted, FftDirection::Forward)?;
            apply_mask(&mut k, &self.mask);
            let img = fft2c(&k, FftDirection::Inverse)?;
            for (a, (m, v)) in acc
                .data_mut()
                .iter_mut()
                .zip(map.data().iter().zip(img.data().iter()))
            {
                *a += m.conj() * v;
            }
        }
        Ok(acc)
    }

    pub fn check_measurements(&self, y: &[KSpaceGrid]) -> Result<()> {
        if y.len() != self.ncoils() {
            return Err(ReconError::shape(format!(
                "{} measurement grids for {} coils",
                y.len(),
                self.ncoils()
            )));
        }
        for (c, grid) in y.iter().enumerate() {
            if grid.shape() != self.shape() {
                return Err(ReconError::shape(format!(
                    "coil {c} grid shape {:?}, expected {:?}",
                    grid.shape(),
                    self.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Zero every unpicked entry.
pub fn apply_mask(grid: &mut ComplexGrid, mask: &SamplingMask) {
    for (v, &keep) in grid.data_mut().iter_mut().zip(mask.picked.data().iter()) {
        if !keep {
            *v = Complex64::new(0.0, 0.0);
        }
    }
}

/// Masked entries of per-coil grids concatenated coil-major in row-major
/// order. This is the measurement vector layout used by the losses.
pub fn restrict_to_mask(grids: &[KSpaceGrid], mask: &SamplingMask) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(mask.count() * grids.len());
    for grid in grids {
        for (v, &keep) in grid.data().iter().zip(mask.picked.data().iter()) {
            if keep {
                out.push(*v);
            }
        }
    }
    out
}

/// Scatter a flat coil-major vector back onto zero-filled grids at the masked
/// locations; inverse of [`restrict_to_mask`].
pub fn scatter_from_mask(
    values: &[Complex64],
    mask: &SamplingMask,
    ncoils: usize,
) -> Result<Vec<KSpaceGrid>> {
    let per_coil = mask.count();
    if values.len() != per_coil * ncoils {
        return Err(ReconError::shape(format!(
            "{} values for {} coils x {} masked points",
            values.len(),
            ncoils,
            per_coil
        )));
    }
    let (rows, cols) = mask.shape();
    let mut out = Vec::with_capacity(ncoils);
    let mut it = values.iter();
    for _ in 0..ncoils {
        let mut grid = ComplexGrid::zeros(rows, cols);
        for (v, &keep) in grid.data_mut().iter_mut().zip(mask.picked.data().iter()) {
            if keep {
                *v = *it.next().expect("length checked above");
            }
        }
        out.push(grid);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::vdot;
    use crate::rng::Splitmix64;
    use crate::sampling::{make_omega_mask, BoolGrid};

    fn random_grid(rows: usize, cols: usize, seed: u64) -> ComplexGrid {
        let mut rng = Splitmix64::new(seed);
        let data = (0..rows * cols)
            .map(|_| Complex64::new(rng.next_f64() * 2.0 - 1.0, rng.next_f64() * 2.0 - 1.0))
            .collect();
        ComplexGrid::new(rows, cols, data).unwrap()
    }

    /// SOS-normalized random smooth-ish maps for tests.
    pub(crate) fn random_sens(rows: usize, cols: usize, ncoils: usize, seed: u64) -> CoilSensitivities {
        let mut rng = Splitmix64::new(seed);
        let mut raw: Vec<ComplexGrid> = (0..ncoils)
            .map(|_| {
                let data = (0..rows * cols)
                    .map(|_| {
                        Complex64::new(rng.next_f64() + 0.2, rng.next_f64() - 0.5)
                    })
                    .collect();
                ComplexGrid::new(rows, cols, data).unwrap()
            })
            .collect();
        for i in 0..rows * cols {
            let sos: f64 = raw.iter().map(|m| m.data()[i].norm_sqr()).sum();
            let s = sos.sqrt();
            for m in raw.iter_mut() {
                m.data_mut()[i] /= s;
            }
        }
        CoilSensitivities::new(raw).unwrap()
    }

    fn unit_sens(rows: usize, cols: usize) -> CoilSensitivities {
        let ones = ComplexGrid::new(
            rows,
            cols,
            vec![Complex64::new(1.0, 0.0); rows * cols],
        )
        .unwrap();
        CoilSensitivities::new(vec![ones]).unwrap()
    }

    fn random_mask(rows: usize, cols: usize, seed: u64) -> SamplingMask {
        let mut rng = Splitmix64::new(seed);
        loop {
            let data: Vec<bool> = (0..rows * cols).map(|_| rng.next_f64() < 0.5).collect();
            if data.iter().any(|&b| b) {
                return SamplingMask::from_picked(BoolGrid::new(rows, cols, data).unwrap())
                    .unwrap();
            }
        }
    }

    #[test]
    fn rejects_unnormalized_maps() {
        let m = ComplexGrid::new(2, 2, vec![Complex64::new(0.5, 0.0); 4]).unwrap();
        assert!(matches!(
            CoilSensitivities::new(vec![m]),
            Err(ReconError::Normalization(_))
        ));
    }

    #[test]
    fn single_coil_full_mask_reduces_to_fft() {
        let (rows, cols) = (8, 8);
        let op = SenseOperator::new(
            Arc::new(unit_sens(rows, cols)),
            SamplingMask::full(rows, cols),
        )
        .unwrap();
        let x = random_grid(rows, cols, 5);
        let y = op.forward(&x).unwrap();
        let direct = fft2c(&x, FftDirection::Forward).unwrap();
        assert!(y[0].sub(&direct).unwrap().l2() < 1e-13);

        let back = op.adjoint(&y).unwrap();
        assert!(back.sub(&x).unwrap().l2() / x.l2() < 1e-12);
    }

    #[test]
    fn zero_mask_not_constructible_and_forward_zeroes_unpicked() {
        let grid = BoolGrid::filled(4, 4, false);
        assert!(SamplingMask::from_picked(grid).is_err());

        let mask = make_omega_mask(8, 8, 4, 0).unwrap();
        let op =
            SenseOperator::new(Arc::new(random_sens(8, 8, 2, 1)), mask.clone()).unwrap();
        let y = op.forward(&random_grid(8, 8, 2)).unwrap();
        for grid in &y {
            for (v, &keep) in grid.data().iter().zip(mask.picked.data().iter()) {
                if !keep {
                    assert_eq!(*v, Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn forward_matches_dense_matrix_oracle() {
        // Build the dense matrix column by column from basis images, then
        // check forward(x) == matrix * x by linearity.
        let (rows, cols, ncoils) = (4, 4, 2);
        let sens = Arc::new(random_sens(rows, cols, ncoils, 3));
        let mask = random_mask(rows, cols, 4);
        let op = SenseOperator::new(sens, mask).unwrap();

        let n = rows * cols;
        let m = n * ncoils;
        let mut matrix = vec![vec![Complex64::new(0.0, 0.0); n]; m];
        for j in 0..n {
            let mut basis = ComplexGrid::zeros(rows, cols);
            basis.data_mut()[j] = Complex64::new(1.0, 0.0);
            let y = op.forward(&basis).unwrap();
            let stacked: Vec<Complex64> = y
                .iter()
                .flat_map(|g| g.data().iter().copied())
                .collect();
            for i in 0..m {
                matrix[i][j] = stacked[i];
            }
        }

        let x = random_grid(rows, cols, 9);
        let y = op.forward(&x).unwrap();
        let stacked: Vec<Complex64> = y.iter().flat_map(|g| g.data().iter().copied()).collect();
        for i in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                acc += matrix[i][j] * x.data()[j];
            }
            assert!((acc - stacked[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn adjoint_test_random_vectors() {
        let (rows, cols, ncoils) = (8, 8, 3);
        let op = SenseOperator::new(
            Arc::new(random_sens(rows, cols, ncoils, 6)),
            random_mask(rows, cols, 7),
        )
        .unwrap();
        let x = random_grid(rows, cols, 8);
        let y: Vec<ComplexGrid> = (0..ncoils)
            .map(|c| random_grid(rows, cols, 100 + c as u64))
            .collect();

        let ex = op.forward(&x).unwrap();
        let aty = op.adjoint(&y).unwrap();

        let ex_flat: Vec<Complex64> = ex.iter().flat_map(|g| g.data().iter().copied()).collect();
        let y_flat: Vec<Complex64> = y.iter().flat_map(|g| g.data().iter().copied()).collect();
        let lhs = vdot(&ex_flat, &y_flat).unwrap();
        let rhs = vdot(x.data(), aty.data()).unwrap();

        let ex_norm = ex_flat.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let y_norm = y_flat.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let resid = (lhs - rhs).norm() / (ex_norm * y_norm);
        assert!(resid < 1e-12, "adjoint residual {resid}");
    }

    #[test]
    fn normal_matches_composition_and_identity_cases() {
        let (rows, cols, ncoils) = (8, 8, 2);
        let sens = Arc::new(random_sens(rows, cols, ncoils, 10));

        // Full mask with SOS maps: normal is the identity.
        let full = SenseOperator::new(Arc::clone(&sens), SamplingMask::full(rows, cols)).unwrap();
        let x = random_grid(rows, cols, 11);
        let nx = full.normal(&x).unwrap();
        assert!(nx.sub(&x).unwrap().l2() / x.l2() < 1e-12);

        // Masked: fused pass equals forward-then-adjoint.
        let op = SenseOperator::new(sens, random_mask(rows, cols, 12)).unwrap();
        let fused = op.normal(&x).unwrap();
        let composed = op.adjoint(&op.forward(&x).unwrap()).unwrap();
        assert!(fused.sub(&composed).unwrap().l2() < 1e-13);
    }

    #[test]
    fn normal_is_self_adjoint_psd() {
        let (rows, cols) = (8, 8);
        let op = SenseOperator::new(
            Arc::new(random_sens(rows, cols, 2, 13)),
            random_mask(rows, cols, 14),
        )
        .unwrap();
        let x = random_grid(rows, cols, 15);
        let y = random_grid(rows, cols, 16);
        let nx = op.normal(&x).unwrap();
        let ny = op.normal(&y).unwrap();

        let xnx = vdot(x.data(), nx.data()).unwrap();
        assert!(xnx.re >= -1e-12);
        let xny = vdot(x.data(), ny.data()).unwrap();
        let ynx = vdot(y.data(), nx.data()).unwrap();
        assert!((xny - ynx.conj()).norm() < 1e-12);
    }

    #[test]
    fn masking_idempotent_and_monotone() {
        let (rows, cols) = (8, 8);
        let sens = Arc::new(random_sens(rows, cols, 2, 20));
        let small = make_omega_mask(rows, cols, 4, 2).unwrap();
        let big = make_omega_mask(rows, cols, 2, 4).unwrap();
        assert!(small.picked.is_subset_of(&big.picked));

        let op_small = SenseOperator::new(Arc::clone(&sens), small.clone()).unwrap();
        let op_big = SenseOperator::new(sens, big).unwrap();
        let x = random_grid(rows, cols, 21);

        // Re-masking the forward output changes nothing.
        let y = op_small.forward(&x).unwrap();
        let mut remasked = y.clone();
        for g in remasked.iter_mut() {
            apply_mask(g, &small);
        }
        for (a, b) in y.iter().zip(remasked.iter()) {
            assert_eq!(a.data(), b.data());
        }

        let norm = |grids: &[ComplexGrid]| {
            grids
                .iter()
                .map(|g| g.l2() * g.l2())
                .sum::<f64>()
                .sqrt()
        };
        assert!(norm(&op_small.forward(&x).unwrap()) <= norm(&op_big.forward(&x).unwrap()) + 1e-12);
    }

    #[test]
    fn restrict_scatter_roundtrip() {
        let mask = random_mask(8, 8, 30);
        let grids: Vec<ComplexGrid> = (0..3).map(|c| {
            let mut g = random_grid(8, 8, 40 + c);
            apply_mask(&mut g, &mask);
            g
        }).collect();
        let flat = restrict_to_mask(&grids, &mask);
        assert_eq!(flat.len(), 3 * mask.count());
        let back = scatter_from_mask(&flat, &mask, 3).unwrap();
        for (a, b) in grids.iter().zip(back.iter()) {
            assert_eq!(a.data(), b.data());
        }
    }
}
