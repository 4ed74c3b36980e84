//! Acquisition masks and their split into data-consistency and loss subsets.
//!
//! The acquired set Omega is a uniform column undersampling pattern plus a
//! fully sampled autocalibration (ACS) block at the k-space center. For
//! self-supervised training Omega is partitioned point-wise into a
//! data-consistency subset and a loss subset; the loss subset holds a fraction
//! `rho` of the acquired points and is drawn either uniformly or with a
//! Gaussian density centered on k-space center.

use crate::error::{ReconError, Result};
use crate::rng::Splitmix64;

/// Row-major boolean grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoolGrid {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl BoolGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(ReconError::shape(format!(
                "bool grid length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(BoolGrid { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: bool) -> Self {
        BoolGrid {
            rows,
            cols,
            data: vec![value; rows * cols],
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

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Flat indices of set entries, in row-major order.
    pub fn indices(&self) -> Vec<usize> {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn is_subset_of(&self, other: &BoolGrid) -> bool {
        self.shape() == other.shape()
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(&a, &b)| !a || b)
    }
}

/// Acquisition pattern: which k-space locations were measured.
///
/// Column direction is phase encode; line masks pick whole columns. `acs_cols`
/// is the inclusive column range of the autocalibration block when the mask
/// was built with one; derived point masks carry `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMask {
    pub picked: BoolGrid,
    pub acs_cols: Option<(usize, usize)>,
    pub accel: usize,
}

impl SamplingMask {
    /// Wrap an arbitrary point set as a mask (no ACS metadata).
    pub fn from_picked(picked: BoolGrid) -> Result<Self> {
        if picked.count() == 0 {
            return Err(ReconError::parameter("mask", "mask has no picked entries"));
        }
        Ok(SamplingMask {
            picked,
            acs_cols: None,
            accel: 1,
        })
    }

    /// Fully sampled mask of the given shape.
    pub fn full(rows: usize, cols: usize) -> Self {
        SamplingMask {
            picked: BoolGrid::filled(rows, cols, true),
            acs_cols: None,
            accel: 1,
        }
    }

    pub fn rows(&self) -> usize {
        self.picked.rows()
    }

    pub fn cols(&self) -> usize {
        self.picked.cols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.picked.shape()
    }

    /// Number of acquired points |Omega|.
    pub fn count(&self) -> usize {
        self.picked.count()
    }
}

/// How the loss subset is drawn from the acquired set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitScheme {
    UniformRandom,
    GaussianDensity,
}

impl SplitScheme {
    pub fn name(&self) -> &'static str {
        match self {
            SplitScheme::UniformRandom => "uniform",
            SplitScheme::GaussianDensity => "gaussian",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform_random" => Ok(SplitScheme::UniformRandom),
            "gaussian" | "gaussian_density" => Ok(SplitScheme::GaussianDensity),
            other => Err(ReconError::parameter(
                "split-scheme",
                format!("unknown scheme `{other}`, expected uniform or gaussian"),
            )),
        }
    }
}

/// Partition of an acquisition mask into a data-consistency set and a loss
/// set. The two grids are disjoint and their union is the parent mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub dc_set: BoolGrid,
    pub loss_set: BoolGrid,
    pub rho: f64,
    pub scheme: SplitScheme,
    pub seed: u64,
}

impl SplitSpec {
    pub fn loss_count(&self) -> usize {
        self.loss_set.count()
    }

    pub fn dc_count(&self) -> usize {
        self.dc_set.count()
    }

    /// Check the partition contract against a parent mask.
    pub fn partitions(&self, mask: &SamplingMask) -> bool {
        if self.dc_set.shape() != mask.shape() || self.loss_set.shape() != mask.shape() {
            return false;
        }
        mask.picked
            .data()
            .iter()
            .zip(self.dc_set.data().iter().zip(self.loss_set.data().iter()))
            .all(|(&omega, (&dc, &loss))| (dc != loss || !dc) && (dc || loss) == omega)
    }
}

/// Options for [`split_omega`] beyond the headline parameters.
#[derive(Debug, Clone, Default)]
pub struct SplitOptions {
    /// Standard deviation of the Gaussian density; defaults to cols/4.
    pub sigma: Option<f64>,
    /// Exclude ACS columns from the loss subset.
    pub exclude_acs: bool,
}

/// Uniform column undersampling at rate `accel` anchored at column 0, plus a
/// centered block of `acs_lines` fully sampled columns.
pub fn make_omega_mask(
    rows: usize,
    cols: usize,
    accel: usize,
    acs_lines: usize,
) -> Result<SamplingMask> {
    if accel < 1 {
        return Err(ReconError::parameter("accel", "must be >= 1"));
    }
    if acs_lines > cols {
        return Err(ReconError::parameter(
            "acs",
            format!("{acs_lines} ACS lines exceed {cols} columns"),
        ));
    }
    let mut picked = BoolGrid::filled(rows, cols, false);
    let acs_start = (cols - acs_lines) / 2;
    let acs = if acs_lines > 0 {
        Some((acs_start, acs_start + acs_lines - 1))
    } else {
        None
    };
    for c in 0..cols {
        let uniform = c.is_multiple_of(accel);
        let in_acs = acs.is_some_and(|(lo, hi)| c >= lo && c <= hi);
        if uniform || in_acs {
            for r in 0..rows {
                picked.set(r, c, true);
            }
        }
    }
    Ok(SamplingMask {
        picked,
        acs_cols: acs,
        accel,
    })
}

/// Partition the acquired set: draw `round(rho * |Omega|)` loss points without
/// replacement, leave the rest for data consistency. Deterministic in `seed`.
pub fn split_omega(
    mask: &SamplingMask,
    rho: f64,
    scheme: SplitScheme,
    seed: u64,
    opts: &SplitOptions,
) -> Result<SplitSpec> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(ReconError::parameter(
            "rho",
            format!("{rho} outside the open interval (0, 1)"),
        ));
    }
    let omega = mask.count();
    let n_loss = (rho * omega as f64).round_ties_even() as usize;
    if n_loss == 0 || n_loss >= omega {
        return Err(ReconError::DegenerateSplit(format!(
            "rho {rho} over {omega} acquired points gives a loss set of {n_loss}"
        )));
    }

    let (rows, cols) = mask.shape();
    let candidates = mask.picked.indices();
    let mut weights: Vec<f64> = match scheme {
        SplitScheme::UniformRandom => vec![1.0; candidates.len()],
        SplitScheme::GaussianDensity => {
            let sigma = opts.sigma.unwrap_or(cols as f64 / 4.0);
            if sigma <= 0.0 {
                return Err(ReconError::parameter("sigma", "must be positive"));
            }
            let (r0, c0) = (rows as f64 / 2.0, cols as f64 / 2.0);
            candidates
                .iter()
                .map(|&idx| {
                    let dr = (idx / cols) as f64 - r0;
                    let dcol = (idx % cols) as f64 - c0;
                    (-(dr * dr + dcol * dcol) / (2.0 * sigma * sigma)).exp()
                })
                .collect()
        }
    };
    if opts.exclude_acs {
        if let Some((lo, hi)) = mask.acs_cols {
            for (w, &idx) in weights.iter_mut().zip(candidates.iter()) {
                let c = idx % cols;
                if c >= lo && c <= hi {
                    *w = 0.0;
                }
            }
        }
        let eligible = weights.iter().filter(|&&w| w > 0.0).count();
        if eligible < n_loss {
            return Err(ReconError::DegenerateSplit(format!(
                "only {eligible} points eligible for a loss set of {n_loss} with ACS excluded"
            )));
        }
    }

    // Sequential weighted draws without replacement. The total is re-summed for
    // every draw so the stream of uniforms maps to indices identically on any
    // platform.
    let mut rng = Splitmix64::new(seed);
    let mut loss = BoolGrid::filled(rows, cols, false);
    for _ in 0..n_loss {
        let total: f64 = weights.iter().sum();
        let mut u = rng.next_f64() * total;
        let mut chosen = None;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            if u < w {
                chosen = Some(i);
                break;
            }
            u -= w;
        }
        // Roundoff can push u past the last positive weight; take it.
        let i = chosen.unwrap_or_else(|| {
            weights
                .iter()
                .rposition(|&w| w > 0.0)
                .expect("positive weight must remain")
        });
        let idx = candidates[i];
        loss.data[idx] = true;
        weights[i] = 0.0;
    }

    let dc_data: Vec<bool> = mask
        .picked
        .data()
        .iter()
        .zip(loss.data().iter())
        .map(|(&omega, &l)| omega && !l)
        .collect();
    let dc = BoolGrid::new(rows, cols, dc_data)?;

    Ok(SplitSpec {
        dc_set: dc,
        loss_set: loss,
        rho,
        scheme,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_mask_counts() {
        // 16 uniform columns and an 8-wide ACS block overlapping in 2.
        let mask = make_omega_mask(64, 64, 4, 8).unwrap();
        let picked_cols: Vec<usize> = (0..64)
            .filter(|&c| (0..64).all(|r| mask.picked.get(r, c)))
            .collect();
        assert_eq!(picked_cols.len(), 22);
        assert_eq!(mask.count(), 22 * 64);
        assert_eq!(mask.acs_cols, Some((28, 35)));

        let full = make_omega_mask(64, 64, 1, 0).unwrap();
        assert_eq!(full.count(), 4096);

        let quarter = make_omega_mask(64, 64, 4, 0).unwrap();
        assert_eq!(quarter.count(), 16 * 64);
    }

    #[test]
    fn omega_mask_rejects_bad_params() {
        assert!(make_omega_mask(64, 64, 0, 8).is_err());
        assert!(make_omega_mask(64, 64, 4, 65).is_err());
    }

    #[test]
    fn split_counts_and_partition() {
        let mask = make_omega_mask(64, 64, 4, 8).unwrap();
        assert_eq!(mask.count(), 1408);
        let split = split_omega(
            &mask,
            0.4,
            SplitScheme::UniformRandom,
            11,
            &SplitOptions::default(),
        )
        .unwrap();
        assert_eq!(split.loss_count(), 563);
        assert_eq!(split.dc_count(), 845);
        assert!(split.partitions(&mask));
    }

    #[test]
    fn split_cardinality_over_rho_sweep() {
        let mask = make_omega_mask(64, 64, 4, 8).unwrap();
        let omega = mask.count() as f64;
        for &rho in &[0.05, 0.1, 0.2, 0.3, 0.4] {
            let split = split_omega(
                &mask,
                rho,
                SplitScheme::GaussianDensity,
                5,
                &SplitOptions::default(),
            )
            .unwrap();
            assert_eq!(
                split.loss_count(),
                (rho * omega).round_ties_even() as usize
            );
            assert!(split.partitions(&mask));
        }
    }

    #[test]
    fn split_single_point_loss_set() {
        let mask = make_omega_mask(4, 4, 2, 0).unwrap();
        // |Omega| = 8; rho 0.12 rounds to 1.
        let split = split_omega(
            &mask,
            0.12,
            SplitScheme::UniformRandom,
            1,
            &SplitOptions::default(),
        )
        .unwrap();
        assert_eq!(split.loss_count(), 1);
        assert_eq!(split.dc_count(), 7);
        assert!(split.partitions(&mask));
    }

    #[test]
    fn split_determinism() {
        let mask = make_omega_mask(32, 32, 4, 4).unwrap();
        let a = split_omega(
            &mask,
            0.3,
            SplitScheme::GaussianDensity,
            77,
            &SplitOptions::default(),
        )
        .unwrap();
        let b = split_omega(
            &mask,
            0.3,
            SplitScheme::GaussianDensity,
            77,
            &SplitOptions::default(),
        )
        .unwrap();
        assert_eq!(a, b);
        let c = split_omega(
            &mask,
            0.3,
            SplitScheme::GaussianDensity,
            78,
            &SplitOptions::default(),
        )
        .unwrap();
        assert_ne!(a.loss_set, c.loss_set);
    }

    #[test]
    fn split_rejects_bad_rho() {
        let mask = make_omega_mask(32, 32, 4, 4).unwrap();
        for bad in [0.0, 1.0, -0.2, 1.5] {
            assert!(matches!(
                split_omega(
                    &mask,
                    bad,
                    SplitScheme::UniformRandom,
                    0,
                    &SplitOptions::default()
                ),
                Err(ReconError::Parameter { .. })
            ));
        }
        // Rounds to zero loss points.
        assert!(matches!(
            split_omega(
                &mask,
                1e-6,
                SplitScheme::UniformRandom,
                0,
                &SplitOptions::default()
            ),
            Err(ReconError::DegenerateSplit(_))
        ));
    }

    #[test]
    fn exclude_acs_keeps_loss_outside_block() {
        let mask = make_omega_mask(32, 32, 4, 4).unwrap();
        let opts = SplitOptions {
            sigma: None,
            exclude_acs: true,
        };
        let split = split_omega(&mask, 0.2, SplitScheme::GaussianDensity, 3, &opts).unwrap();
        let (lo, hi) = mask.acs_cols.unwrap();
        for r in 0..32 {
            for c in lo..=hi {
                assert!(!split.loss_set.get(r, c));
            }
        }
        assert!(split.partitions(&mask));
    }

    #[test]
    fn gaussian_density_concentrates_centrally() {
        let mask = make_omega_mask(32, 32, 4, 4).unwrap();
        let (rows, cols) = mask.shape();
        let candidates = mask.picked.indices();
        // Rank acquired points by distance from center; compare selection
        // frequency between the nearest and farthest quartiles.
        let mut by_radius: Vec<(f64, usize)> = candidates
            .iter()
            .map(|&idx| {
                let dr = (idx / cols) as f64 - rows as f64 / 2.0;
                let dcol = (idx % cols) as f64 - cols as f64 / 2.0;
                (dr * dr + dcol * dcol, idx)
            })
            .collect();
        by_radius.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let quarter = by_radius.len() / 4;
        let central: Vec<usize> = by_radius[..quarter].iter().map(|&(_, i)| i).collect();
        let outer: Vec<usize> = by_radius[by_radius.len() - quarter..]
            .iter()
            .map(|&(_, i)| i)
            .collect();

        let mut freq = vec![0usize; rows * cols];
        for seed in 0..1000u64 {
            let split = split_omega(
                &mask,
                0.2,
                SplitScheme::GaussianDensity,
                seed,
                &SplitOptions::default(),
            )
            .unwrap();
            for (i, &l) in split.loss_set.data().iter().enumerate() {
                if l {
                    freq[i] += 1;
                }
            }
        }
        let mean = |ids: &[usize]| {
            ids.iter().map(|&i| freq[i] as f64).sum::<f64>() / ids.len() as f64
        };
        assert!(
            mean(&central) > mean(&outer),
            "central {} vs outer {}",
            mean(&central),
            mean(&outer)
        );
    }
}
