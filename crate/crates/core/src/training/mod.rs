//! Training: losses, reverse-mode gradients, Adam, and the epoch loop.
//!
//! Self-supervised training never touches reference images: each scan's
//! acquired k-space is split into a data-consistency subset (fed to the
//! network) and a loss subset (compared against the network output pushed
//! back through the encoder). Supervised training drives the same network
//! with the full acquired set against the reference image. Both loops are
//! batch-size-1 Adam over a seeded shuffle, bit-reproducible per seed.

mod backprop;
mod loss;

pub use backprop::{backprop, GradientBundle, LossTarget};
pub use loss::{norm_l1l2_loss, selfsup_loss, supervised_loss};

use crate::dataio::Scan;
use crate::encoding::{apply_mask, SenseOperator};
use crate::error::{ReconError, Result};
use crate::grid::{ComplexImage, KSpaceGrid};
use crate::network::{NetConfig, NetworkParams};
use crate::rng::Splitmix64;
use crate::sampling::SamplingMask;
use std::sync::Arc;

/// Which loss drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Image-domain loss against a reference; scans must carry `ref_image`.
    SupervisedImage,
    /// k-space loss over the held-out subset; scans must carry a split.
    SelfsupKspace,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::SupervisedImage => "supervised",
            LossKind::SelfsupKspace => "selfsup",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "supervised" => Ok(LossKind::SupervisedImage),
            "selfsup" | "self-supervised" => Ok(LossKind::SelfsupKspace),
            other => Err(ReconError::parameter(
                "loss",
                format!("unknown loss `{other}`, expected supervised or selfsup"),
            )),
        }
    }
}

/// Adam optimizer state, congruent with the flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut NetworkParams,
    grads: &GradientBundle,
) -> Result<()> {
    let n = params.len();
    if grads.grads.len() != n || state.first_moment.len() != n {
        return Err(ReconError::shape(
            "optimizer state, parameters and gradients must be congruent",
        ));
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    let data = params.data_mut();
    for i in 0..n {
        let g = grads.grads[i];
        state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        state.second_moment[i] =
            state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.first_moment[i] / bc1;
        let v_hat = state.second_moment[i] / bc2;
        data[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Per-scan tensors prepared once before the epoch loop.
struct PreparedScan {
    op_fwd: SenseOperator,
    y_fwd: Vec<KSpaceGrid>,
    op_loss: Option<SenseOperator>,
    y_loss: Option<Vec<KSpaceGrid>>,
    x_ref: Option<ComplexImage>,
}

impl PreparedScan {
    fn target(&self) -> LossTarget<'_> {
        match (&self.op_loss, &self.y_loss, &self.x_ref) {
            (Some(op_loss), Some(y_loss), _) => LossTarget::SelfSupervised {
                op_dc: &self.op_fwd,
                y_dc: &self.y_fwd,
                op_loss,
                y_loss,
            },
            (_, _, Some(x_ref)) => LossTarget::Supervised {
                op: &self.op_fwd,
                y: &self.y_fwd,
                x_ref,
            },
            _ => unreachable!("prepared scan carries either a split or a reference"),
        }
    }
}

fn prepare(scan: &Scan, loss_kind: LossKind) -> Result<PreparedScan> {
    match loss_kind {
        LossKind::SelfsupKspace => {
            let split = scan.split.as_ref().ok_or_else(|| {
                ReconError::Config(format!(
                    "scan {} has no split; self-supervised training needs one",
                    scan.scan_id
                ))
            })?;
            if !split.partitions(&scan.mask) {
                return Err(ReconError::Config(format!(
                    "scan {}: split does not partition the acquisition mask",
                    scan.scan_id
                )));
            }
            let dc_mask = SamplingMask::from_picked(split.dc_set.clone()).map_err(|_| {
                ReconError::DegenerateSplit(format!("scan {}: empty DC subset", scan.scan_id))
            })?;
            let loss_mask = SamplingMask::from_picked(split.loss_set.clone()).map_err(|_| {
                ReconError::DegenerateSplit(format!("scan {}: empty loss subset", scan.scan_id))
            })?;
            let mut y_dc = scan.kspace.clone();
            for grid in y_dc.iter_mut() {
                apply_mask(grid, &dc_mask);
            }
            let mut y_loss = scan.kspace.clone();
            for grid in y_loss.iter_mut() {
                apply_mask(grid, &loss_mask);
            }
            Ok(PreparedScan {
                op_fwd: SenseOperator::new(Arc::clone(&scan.sens), dc_mask)?,
                y_fwd: y_dc,
                op_loss: Some(SenseOperator::new(Arc::clone(&scan.sens), loss_mask)?),
                y_loss: Some(y_loss),
                x_ref: None,
            })
        }
        LossKind::SupervisedImage => {
            let x_ref = scan.ref_image.clone().ok_or_else(|| {
                ReconError::Config(format!(
                    "scan {} has no reference image; supervised training needs one",
                    scan.scan_id
                ))
            })?;
            Ok(PreparedScan {
                op_fwd: scan.omega_operator()?,
                y_fwd: scan.kspace.clone(),
                op_loss: None,
                y_loss: None,
                x_ref: Some(x_ref),
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 100,
            lr: 1e-3,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: NetworkParams,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Train the unrolled network over the cohort: batch size 1, seeded shuffle
/// per epoch, fixed epoch count. Deterministic given (scans, cfg, options).
pub fn fit(
    scans: &[Scan],
    cfg: &NetConfig,
    loss_kind: LossKind,
    opts: &TrainOptions,
) -> Result<FitResult> {
    fit_with_callback(scans, cfg, loss_kind, opts, |_, _, _| Ok(()))
}

/// [`fit`] with a per-epoch callback `(epoch, params, mean_loss)`, used for
/// checkpointing.
pub fn fit_with_callback(
    scans: &[Scan],
    cfg: &NetConfig,
    loss_kind: LossKind,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(usize, &NetworkParams, f64) -> Result<()>,
) -> Result<FitResult> {
    if scans.is_empty() {
        return Err(ReconError::Config("training dataset is empty".into()));
    }
    let prepared: Vec<PreparedScan> = scans
        .iter()
        .map(|s| prepare(s, loss_kind))
        .collect::<Result<_>>()?;

    let mut params = NetworkParams::init(cfg, opts.seed);
    let mut state = AdamState::new(params.len(), opts.lr);
    let mut epoch_losses = Vec::with_capacity(opts.epochs);

    for epoch in 0..opts.epochs {
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        let mut rng = Splitmix64::with_stream(opts.seed, 0x7368_7566 ^ epoch as u64);
        rng.shuffle(&mut order);

        let mut total = 0.0;
        for &idx in &order {
            let bundle = backprop(&params, cfg, &prepared[idx].target()).map_err(|e| {
                ReconError::Numeric(format!(
                    "epoch {epoch}, scan {}: {e}",
                    scans[idx].scan_id
                ))
            })?;
            total += bundle.loss;
            adam_step(&mut state, &mut params, &bundle)?;
        }
        let mean = total / prepared.len() as f64;
        epoch_losses.push(mean);
        on_epoch(epoch, &params, mean)?;
    }

    Ok(FitResult {
        params,
        epoch_losses,
    })
}
