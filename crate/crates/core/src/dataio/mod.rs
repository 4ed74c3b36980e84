//! Synthetic multi-coil cohorts and dataset serialization.
//!
//! Phantoms are randomized overlapping ellipses with a smooth polynomial
//! phase, coil maps are Gaussian lobes placed around the field-of-view
//! perimeter and normalized to unit sum-of-squares, and acquisitions apply
//! the encoding operator plus complex Gaussian noise at acquired locations.
//! Datasets live on disk as one directory per scan of KSRD blobs plus a JSON
//! manifest; generation is bit-reproducible from the manifest seed.

pub mod ksrd;

pub use ksrd::{peek_dims, read_blob, write_blob, GridStack, KsrdObject, NetworkCheckpoint};

use crate::encoding::{CoilSensitivities, SenseOperator};
use crate::error::{ReconError, Result};
use crate::grid::{ComplexGrid, ComplexImage, KSpaceGrid};
use crate::rng::Splitmix64;
use crate::sampling::{make_omega_mask, SamplingMask, SplitSpec};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// One acquired scan: masked k-space, the mask, an optional split, coil maps,
/// and (for synthetic data) the ground-truth image.
#[derive(Debug, Clone)]
pub struct Scan {
    pub scan_id: String,
    pub kspace: Vec<KSpaceGrid>,
    pub mask: SamplingMask,
    pub split: Option<SplitSpec>,
    pub sens: Arc<CoilSensitivities>,
    pub ref_image: Option<ComplexImage>,
    pub noise_sigma: f64,
}

impl Scan {
    pub fn shape(&self) -> (usize, usize) {
        self.mask.shape()
    }

    pub fn ncoils(&self) -> usize {
        self.sens.ncoils()
    }

    /// Encoding operator over the full acquired set.
    pub fn omega_operator(&self) -> Result<SenseOperator> {
        SenseOperator::new(Arc::clone(&self.sens), self.mask.clone())
    }
}

/// Generation parameters for a synthetic cohort.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenParams {
    pub scans: usize,
    pub rows: usize,
    pub cols: usize,
    pub ncoils: usize,
    pub accel: usize,
    pub acs_lines: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            scans: 20,
            rows: 64,
            cols: 64,
            ncoils: 4,
            accel: 4,
            acs_lines: 8,
            noise_sigma: 0.01,
            seed: 1,
        }
    }
}

/// Outer-envelope ellipse plus the maximum count of randomized inner
/// structures: (center_u, center_w, semi_u, semi_w, angle_deg, value).
const OUTER_ELLIPSE: (f64, f64, f64, f64, f64, f64) = (0.0, 0.0, 0.75, 0.92, 0.0, 1.0);
const MAX_INNER_ELLIPSES: usize = 9;

/// Piecewise-smooth ellipse phantom with a smooth low-order polynomial phase,
/// max magnitude normalized to 1. Deterministic per seed. The inner-structure
/// count, placement, axes, orientations and intensities all vary per seed so
/// a cohort is a genuinely diverse family rather than one template.
pub fn make_phantom(rows: usize, cols: usize, seed: u64) -> ComplexImage {
    let mut rng = Splitmix64::with_stream(seed, 0x7068_616e); // phantom stream
    let jitter = |rng: &mut Splitmix64, scale: f64| (rng.next_f64() * 2.0 - 1.0) * scale;

    let mut ellipses = Vec::with_capacity(1 + MAX_INNER_ELLIPSES);
    {
        let (cu, cw, au, aw, ang, val) = OUTER_ELLIPSE;
        ellipses.push((
            cu + jitter(&mut rng, 0.05),
            cw + jitter(&mut rng, 0.05),
            au * (1.0 + jitter(&mut rng, 0.1)),
            aw * (1.0 + jitter(&mut rng, 0.05)),
            (ang + jitter(&mut rng, 8.0)).to_radians(),
            val,
        ));
    }
    let inner = 4 + rng.next_below(MAX_INNER_ELLIPSES - 3);
    for _ in 0..inner {
        let angle = rng.next_f64() * 2.0 * std::f64::consts::PI;
        let radius = rng.next_f64() * 0.55;
        ellipses.push((
            radius * angle.cos(),
            radius * angle.sin(),
            0.04 + rng.next_f64() * 0.30,
            0.04 + rng.next_f64() * 0.30,
            rng.next_f64() * std::f64::consts::PI,
            (0.15 + rng.next_f64() * 0.6) * if rng.next_f64() < 0.35 { -1.0 } else { 1.0 },
        ));
    }
    let phase_coeffs: Vec<f64> = (0..6).map(|_| jitter(&mut rng, 0.6)).collect();

    let mut img = ComplexGrid::zeros(rows, cols);
    for r in 0..rows {
        let w = (r as f64 - rows as f64 / 2.0) / (rows as f64 / 2.0);
        for c in 0..cols {
            let u = (c as f64 - cols as f64 / 2.0) / (cols as f64 / 2.0);
            let mut value = 0.0;
            for &(cu, cw, au, aw, ang, val) in &ellipses {
                let (du, dw) = (u - cu, w - cw);
                let (cos_a, sin_a) = (ang.cos(), ang.sin());
                let ru = cos_a * du + sin_a * dw;
                let rw = -sin_a * du + cos_a * dw;
                if (ru / au).powi(2) + (rw / aw).powi(2) <= 1.0 {
                    value += val;
                }
            }
            let phase = phase_coeffs[0]
                + phase_coeffs[1] * u
                + phase_coeffs[2] * w
                + phase_coeffs[3] * u * w
                + phase_coeffs[4] * u * u
                + phase_coeffs[5] * w * w;
            img.set(r, c, Complex64::from_polar(value, phase));
        }
    }

    let max_mag = img.data().iter().map(|v| v.norm()).fold(0.0, f64::max);
    if max_mag > 0.0 {
        img.scale_real(1.0 / max_mag)
    } else {
        img
    }
}

/// Smooth complex coil profiles: Gaussian lobes centered at `ncoils` points
/// around the field-of-view perimeter with per-coil linear phase, normalized
/// so the sum of squared magnitudes is exactly 1 at every pixel.
pub fn make_coilmaps(rows: usize, cols: usize, ncoils: usize, seed: u64) -> Result<CoilSensitivities> {
    if ncoils == 0 {
        return Err(ReconError::parameter("coils", "must be >= 1"));
    }
    let mut rng = Splitmix64::with_stream(seed, 0x636f_696c); // coil stream
    let mut raw: Vec<ComplexGrid> = Vec::with_capacity(ncoils);
    for k in 0..ncoils {
        let angle = 2.0 * std::f64::consts::PI * k as f64 / ncoils as f64
            + (rng.next_f64() - 0.5) * 0.2;
        let (cu, cw) = (1.15 * angle.cos(), 1.15 * angle.sin());
        let width = 1.0 + 0.2 * rng.next_f64();
        let (p0, p1, p2) = (
            (rng.next_f64() - 0.5) * 2.0,
            (rng.next_f64() - 0.5) * 0.8,
            (rng.next_f64() - 0.5) * 0.8,
        );
        let mut map = ComplexGrid::zeros(rows, cols);
        for r in 0..rows {
            let w = (r as f64 - rows as f64 / 2.0) / (rows as f64 / 2.0);
            for c in 0..cols {
                let u = (c as f64 - cols as f64 / 2.0) / (cols as f64 / 2.0);
                let d2 = (u - cu).powi(2) + (w - cw).powi(2);
                let mag = (-d2 / (2.0 * width * width)).exp();
                let phase = p0 + p1 * u + p2 * w;
                map.set(r, c, Complex64::from_polar(mag, phase));
            }
        }
        raw.push(map);
    }
    // Exact SOS normalization; the Gaussian lobes are strictly positive so
    // every pixel has nonzero sum.
    for i in 0..rows * cols {
        let sos: f64 = raw.iter().map(|m| m.data()[i].norm_sqr()).sum();
        let s = sos.sqrt();
        for m in raw.iter_mut() {
            m.data_mut()[i] /= s;
        }
    }
    CoilSensitivities::new(raw)
}

/// Measure a scan: encode, then add i.i.d. complex Gaussian noise with std
/// `noise_sigma` per real component at acquired locations only.
pub fn simulate_acquisition(
    x: &ComplexImage,
    sens: &Arc<CoilSensitivities>,
    mask: &SamplingMask,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<KSpaceGrid>> {
    let op = SenseOperator::new(Arc::clone(sens), mask.clone())?;
    let mut kspace = op.forward(x)?;
    if noise_sigma > 0.0 {
        let mut rng = Splitmix64::with_stream(seed, 0x6e6f_6973); // noise stream
        for grid in kspace.iter_mut() {
            for (v, &keep) in grid.data_mut().iter_mut().zip(mask.picked.data().iter()) {
                if keep {
                    let (a, b) = rng.next_gaussian_pair();
                    *v += Complex64::new(a * noise_sigma, b * noise_sigma);
                }
            }
        }
    }
    Ok(kspace)
}

/// Generate one scan; `index` separates the per-scan random streams.
pub fn generate_scan(params: &GenParams, index: usize) -> Result<Scan> {
    let scan_seed = Splitmix64::with_stream(params.seed, index as u64).next_u64();
    let phantom = make_phantom(params.rows, params.cols, scan_seed);
    let sens = Arc::new(make_coilmaps(
        params.rows,
        params.cols,
        params.ncoils,
        scan_seed,
    )?);
    let mask = make_omega_mask(params.rows, params.cols, params.accel, params.acs_lines)?;
    let kspace = simulate_acquisition(&phantom, &sens, &mask, params.noise_sigma, scan_seed)?;
    Ok(Scan {
        scan_id: format!("scan_{index:03}"),
        kspace,
        mask,
        split: None,
        sens,
        ref_image: Some(phantom),
        noise_sigma: params.noise_sigma,
    })
}

/// Generate the whole cohort in memory.
pub fn generate_dataset(params: &GenParams) -> Result<Vec<Scan>> {
    (0..params.scans).map(|i| generate_scan(params, i)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanEntry {
    pub scan_id: String,
    pub dir: String,
    pub rows: usize,
    pub cols: usize,
    pub ncoils: usize,
    pub has_split: bool,
    pub has_ref: bool,
    pub noise_sigma: f64,
}

/// Dataset provenance and per-scan references; stored as `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub scan_count: usize,
    pub generator: GenParams,
    pub scans: Vec<ScanEntry>,
}

fn scan_dir(root: &Path, entry_dir: &str) -> PathBuf {
    root.join(entry_dir)
}

/// Write a cohort under `root`: `scan_k/{kspace,mask,split,sens,ref}.ksrd`
/// plus `manifest.json`.
pub fn write_dataset(root: &Path, name: &str, scans: &[Scan], params: &GenParams) -> Result<Manifest> {
    std::fs::create_dir_all(root)?;
    let mut entries = Vec::with_capacity(scans.len());
    for scan in scans {
        let dir = scan_dir(root, &scan.scan_id);
        std::fs::create_dir_all(&dir)?;
        write_blob(&dir.join("kspace.ksrd"), &GridStack(scan.kspace.clone()))?;
        write_blob(&dir.join("mask.ksrd"), &scan.mask)?;
        write_blob(
            &dir.join("sens.ksrd"),
            &GridStack(scan.sens.maps().to_vec()),
        )?;
        if let Some(split) = &scan.split {
            write_blob(&dir.join("split.ksrd"), split)?;
        }
        if let Some(reference) = &scan.ref_image {
            write_blob(&dir.join("ref.ksrd"), reference)?;
        }
        let (rows, cols) = scan.shape();
        entries.push(ScanEntry {
            scan_id: scan.scan_id.clone(),
            dir: scan.scan_id.clone(),
            rows,
            cols,
            ncoils: scan.ncoils(),
            has_split: scan.split.is_some(),
            has_ref: scan.ref_image.is_some(),
            noise_sigma: scan.noise_sigma,
        });
    }
    let manifest = Manifest {
        name: name.to_string(),
        seed: params.seed,
        scan_count: scans.len(),
        generator: params.clone(),
        scans: entries,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(root.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| {
        ReconError::Config(format!("cannot read {}: {e}", path.display()))
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Load a cohort, validating every referenced blob against the manifest's
/// shape entries.
pub fn read_dataset(root: &Path) -> Result<(Manifest, Vec<Scan>)> {
    let manifest = read_manifest(root)?;
    let mut scans = Vec::with_capacity(manifest.scans.len());
    for entry in &manifest.scans {
        let dir = scan_dir(root, &entry.dir);
        let expect = [entry.ncoils as u64, entry.rows as u64, entry.cols as u64];

        let kspace_path = dir.join("kspace.ksrd");
        let dims = peek_dims(&kspace_path)?;
        if dims != expect {
            return Err(ReconError::Format {
                offset: 0,
                msg: format!(
                    "{}: dims {dims:?} disagree with manifest {expect:?}",
                    kspace_path.display()
                ),
            });
        }
        let kspace: GridStack = read_blob(&kspace_path)?;
        let mask: SamplingMask = read_blob(&dir.join("mask.ksrd"))?;
        let sens: GridStack = read_blob(&dir.join("sens.ksrd"))?;
        if mask.shape() != (entry.rows, entry.cols) {
            return Err(ReconError::Format {
                offset: 0,
                msg: format!("{}: mask shape disagrees with manifest", dir.display()),
            });
        }
        let split = if entry.has_split {
            Some(read_blob::<SplitSpec>(&dir.join("split.ksrd"))?)
        } else {
            None
        };
        let ref_image = if entry.has_ref {
            let reference: ComplexGrid = read_blob(&dir.join("ref.ksrd"))?;
            if reference.shape() != (entry.rows, entry.cols) {
                return Err(ReconError::Format {
                    offset: 0,
                    msg: format!("{}: ref shape disagrees with manifest", dir.display()),
                });
            }
            Some(reference)
        } else {
            None
        };
        scans.push(Scan {
            scan_id: entry.scan_id.clone(),
            kspace: kspace.0,
            mask,
            split,
            sens: Arc::new(CoilSensitivities::new(sens.0)?),
            ref_image,
            noise_sigma: entry.noise_sigma,
        });
    }
    Ok((manifest, scans))
}

/// Attach a split to every scan on disk and update the manifest.
pub fn write_splits(root: &Path, splits: &[(String, SplitSpec)]) -> Result<()> {
    let mut manifest = read_manifest(root)?;
    for (scan_id, split) in splits {
        let entry = manifest
            .scans
            .iter_mut()
            .find(|e| &e.scan_id == scan_id)
            .ok_or_else(|| ReconError::Config(format!("scan {scan_id} not in manifest")))?;
        write_blob(&scan_dir(root, &entry.dir).join("split.ksrd"), split)?;
        entry.has_split = true;
    }
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(root.join("manifest.json"), json + "\n")?;
    Ok(())
}
