//! The unrolled reconstruction network: a convolutional regularizer
//! alternating with a conjugate-gradient data-consistency unit.
//!
//! One forward pass starts from the adjoint (zero-filled) image and runs T
//! unroll steps. Each step maps the current image through a ResNet (complex
//! pixels carried as two real channels) and then solves
//! `(E^H E + mu I) x = E^H y + mu z` with a fixed CG budget. All weights and
//! the penalty mu are shared across steps, so the trainable state is one flat
//! parameter vector.

use crate::encoding::SenseOperator;
use crate::error::{ReconError, Result};
use crate::grid::{ComplexGrid, ComplexImage, KSpaceGrid};
use crate::rng::Splitmix64;
use crate::solvers::CgReport;
use num_complex::Complex64;
use std::ops::Range;

/// Architecture and unrolling configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    /// Unroll count T.
    pub unrolls: usize,
    /// Fixed CG iterations inside every data-consistency unit.
    pub cg_iters: usize,
    /// Convolution channels C.
    pub channels: usize,
    /// Residual block count B.
    pub res_blocks: usize,
    /// Square kernel size, odd.
    pub kernel: usize,
    /// Constant multiplier on each residual block output.
    pub scale: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            unrolls: 10,
            cg_iters: 10,
            channels: 16,
            res_blocks: 4,
            kernel: 3,
            scale: 0.1,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel.is_multiple_of(2) || self.kernel == 0 {
            return Err(ReconError::parameter("kernel", "must be odd"));
        }
        if self.channels == 0 {
            return Err(ReconError::parameter("channels", "must be >= 1"));
        }
        if self.scale <= 0.0 {
            return Err(ReconError::parameter("scale", "must be positive"));
        }
        Ok(())
    }
}

/// Total trainable scalars: input and output convolutions, two convolutions
/// per residual block (all bias-free), plus the data-consistency penalty.
pub fn count_params(cfg: &NetConfig) -> usize {
    let k2 = cfg.kernel * cfg.kernel;
    let c = cfg.channels;
    2 * (k2 * 2 * c) + cfg.res_blocks * 2 * (k2 * c * c) + 1
}

/// Initial value of the data-consistency penalty mu.
const MU_INIT: f64 = 0.1;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn inverse_softplus(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    y + (-(-y).exp_m1()).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// All trainable scalars as one flat vector. Convolution weights are indexed
/// `[dy][dx][c_in][c_out]` per layer; the raw (pre-softplus) penalty sits
/// last. Layout order: input conv, then per block conv1 and conv2, then
/// output conv, then mu.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    kernel: usize,
    channels: usize,
    res_blocks: usize,
    scale: f64,
    data: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(cfg: &NetConfig) -> Self {
        let mut p = NetworkParams {
            kernel: cfg.kernel,
            channels: cfg.channels,
            res_blocks: cfg.res_blocks,
            scale: cfg.scale,
            data: vec![0.0; count_params(cfg)],
        };
        let mu_idx = p.mu_index();
        p.data[mu_idx] = inverse_softplus(MU_INIT);
        p
    }

    /// Seeded truncated-normal init with per-layer std sqrt(2 / (k^2 * c_in)).
    pub fn init(cfg: &NetConfig, seed: u64) -> Self {
        let mut p = NetworkParams::zeros(cfg);
        let mut rng = Splitmix64::with_stream(seed, 0x6e65_7477);
        let k2 = cfg.kernel * cfg.kernel;
        let layers: Vec<(Range<usize>, usize)> = {
            let mut v = vec![(p.conv_in_range(), 2)];
            for b in 0..cfg.res_blocks {
                v.push((p.block_w1_range(b), cfg.channels));
                v.push((p.block_w2_range(b), cfg.channels));
            }
            v.push((p.conv_out_range(), cfg.channels));
            v
        };
        for (range, c_in) in layers {
            let std = (2.0 / (k2 * c_in) as f64).sqrt();
            for i in range {
                p.data[i] = rng.next_truncated_gaussian() * std;
            }
        }
        p
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn res_blocks(&self) -> usize {
        self.res_blocks
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn from_parts(
        kernel: usize,
        channels: usize,
        res_blocks: usize,
        scale: f64,
        data: Vec<f64>,
    ) -> Result<Self> {
        let cfg = NetConfig {
            kernel,
            channels,
            res_blocks,
            scale,
            ..NetConfig::default()
        };
        if data.len() != count_params(&cfg) {
            return Err(ReconError::shape(format!(
                "{} parameter scalars, layout needs {}",
                data.len(),
                count_params(&cfg)
            )));
        }
        Ok(NetworkParams {
            kernel,
            channels,
            res_blocks,
            scale,
            data,
        })
    }

    /// Data-consistency penalty, kept positive through a softplus map.
    pub fn mu(&self) -> f64 {
        softplus(self.data[self.mu_index()])
    }

    pub fn mu_index(&self) -> usize {
        self.data.len() - 1
    }

    /// d(mu)/d(raw), for chaining gradients onto the stored scalar.
    pub fn mu_positivity_slope(&self) -> f64 {
        sigmoid(self.data[self.mu_index()])
    }

    fn layer_len(&self, c_in: usize, c_out: usize) -> usize {
        self.kernel * self.kernel * c_in * c_out
    }

    pub fn conv_in_range(&self) -> Range<usize> {
        0..self.layer_len(2, self.channels)
    }

    pub fn block_w1_range(&self, b: usize) -> Range<usize> {
        let base = self.layer_len(2, self.channels)
            + b * 2 * self.layer_len(self.channels, self.channels);
        base..base + self.layer_len(self.channels, self.channels)
    }

    pub fn block_w2_range(&self, b: usize) -> Range<usize> {
        let r = self.block_w1_range(b);
        r.end..r.end + self.layer_len(self.channels, self.channels)
    }

    pub fn conv_out_range(&self) -> Range<usize> {
        let base = self.layer_len(2, self.channels)
            + self.res_blocks * 2 * self.layer_len(self.channels, self.channels);
        base..base + self.layer_len(self.channels, 2)
    }
}

/// Channel-major real field backing the CNN: planes `[ch][y][x]`.
#[derive(Debug, Clone)]
pub(crate) struct RealField {
    pub ch: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl RealField {
    pub fn zeros(ch: usize, h: usize, w: usize) -> Self {
        RealField {
            ch,
            h,
            w,
            data: vec![0.0; ch * h * w],
        }
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.h * self.w;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.h * self.w;
        &mut self.data[c * n..(c + 1) * n]
    }
}

fn complex_to_field(x: &ComplexGrid) -> RealField {
    let (h, w) = x.shape();
    let mut f = RealField::zeros(2, h, w);
    for (i, v) in x.data().iter().enumerate() {
        f.data[i] = v.re;
        f.data[h * w + i] = v.im;
    }
    f
}

fn field_to_complex(f: &RealField) -> ComplexGrid {
    debug_assert_eq!(f.ch, 2);
    let n = f.h * f.w;
    let data = (0..n)
        .map(|i| Complex64::new(f.data[i], f.data[n + i]))
        .collect();
    ComplexGrid::new(f.h, f.w, data).expect("length consistent by construction")
}

/// Same-size zero-padded convolution, accumulating into `out` (callers zero
/// it first). Weights are `[dy][dx][c_in][c_out]` within `weights`.
fn conv_accumulate(input: &RealField, weights: &[f64], kernel: usize, out: &mut RealField) {
    let (h, w) = (input.h, input.w);
    let pad = kernel / 2;
    let (c_in, c_out) = (input.ch, out.ch);
    debug_assert_eq!(weights.len(), kernel * kernel * c_in * c_out);
    for o in 0..c_out {
        for i in 0..c_in {
            let src = input.plane(i);
            for dy in 0..kernel {
                let y_off = dy as isize - pad as isize;
                let (y_lo, y_hi) = shift_range(h, y_off);
                for dx in 0..kernel {
                    let wgt = weights[((dy * kernel + dx) * c_in + i) * c_out + o];
                    if wgt == 0.0 {
                        continue;
                    }
                    let x_off = dx as isize - pad as isize;
                    let (x_lo, x_hi) = shift_range(w, x_off);
                    let dst = out.plane_mut(o);
                    for y in y_lo..y_hi {
                        let src_row = ((y as isize + y_off) as usize) * w;
                        let dst_row = y * w;
                        for x in x_lo..x_hi {
                            dst[dst_row + x] += wgt * src[src_row + (x as isize + x_off) as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Gradient of the convolution with respect to its input, accumulated.
fn conv_back_input(g_out: &RealField, weights: &[f64], kernel: usize, g_in: &mut RealField) {
    let (h, w) = (g_out.h, g_out.w);
    let pad = kernel / 2;
    let (c_in, c_out) = (g_in.ch, g_out.ch);
    for o in 0..c_out {
        for i in 0..c_in {
            let src = g_out.plane(o);
            for dy in 0..kernel {
                let y_off = dy as isize - pad as isize;
                let (y_lo, y_hi) = shift_range(h, y_off);
                for dx in 0..kernel {
                    let wgt = weights[((dy * kernel + dx) * c_in + i) * c_out + o];
                    if wgt == 0.0 {
                        continue;
                    }
                    let x_off = dx as isize - pad as isize;
                    let (x_lo, x_hi) = shift_range(w, x_off);
                    let dst = g_in.plane_mut(i);
                    for y in y_lo..y_hi {
                        let dst_row = ((y as isize + y_off) as usize) * w;
                        let src_row = y * w;
                        for x in x_lo..x_hi {
                            dst[dst_row + (x as isize + x_off) as usize] += wgt * src[src_row + x];
                        }
                    }
                }
            }
        }
    }
}

/// Gradient of the convolution with respect to its weights, accumulated.
fn conv_back_weights(input: &RealField, g_out: &RealField, kernel: usize, g_weights: &mut [f64]) {
    let (h, w) = (input.h, input.w);
    let pad = kernel / 2;
    let (c_in, c_out) = (input.ch, g_out.ch);
    for o in 0..c_out {
        let gplane = g_out.plane(o);
        for i in 0..c_in {
            let src = input.plane(i);
            for dy in 0..kernel {
                let y_off = dy as isize - pad as isize;
                let (y_lo, y_hi) = shift_range(h, y_off);
                for dx in 0..kernel {
                    let x_off = dx as isize - pad as isize;
                    let (x_lo, x_hi) = shift_range(w, x_off);
                    let mut acc = 0.0;
                    for y in y_lo..y_hi {
                        let src_row = ((y as isize + y_off) as usize) * w;
                        let g_row = y * w;
                        for x in x_lo..x_hi {
                            acc += gplane[g_row + x] * src[src_row + (x as isize + x_off) as usize];
                        }
                    }
                    g_weights[((dy * kernel + dx) * c_in + i) * c_out + o] += acc;
                }
            }
        }
    }
}

/// Output rows y such that y + off stays in [0, n).
#[inline]
fn shift_range(n: usize, off: isize) -> (usize, usize) {
    let lo = if off < 0 { (-off) as usize } else { 0 };
    let hi = if off > 0 { n - (off as usize).min(n) } else { n };
    (lo.min(n), hi)
}

/// Forward activations kept for the backward pass (one regularizer call).
pub(crate) struct ResnetCache {
    input2: RealField,
    /// Input to each residual block, plus the output-conv input last.
    block_inputs: Vec<RealField>,
    /// Pre-ReLU outputs of each block's first convolution.
    pre_relu: Vec<RealField>,
}

pub(crate) fn resnet_forward_cached(
    params: &NetworkParams,
    x: &ComplexImage,
) -> (ComplexImage, ResnetCache) {
    let (h, w) = x.shape();
    let (c, k) = (params.channels, params.kernel);
    let input2 = complex_to_field(x);

    let mut hbuf = RealField::zeros(c, h, w);
    conv_accumulate(&input2, &params.data[params.conv_in_range()], k, &mut hbuf);

    let mut block_inputs = Vec::with_capacity(params.res_blocks + 1);
    let mut pre_relu = Vec::with_capacity(params.res_blocks);
    for b in 0..params.res_blocks {
        block_inputs.push(hbuf.clone());
        let mut a1 = RealField::zeros(c, h, w);
        conv_accumulate(&hbuf, &params.data[params.block_w1_range(b)], k, &mut a1);
        let mut relu = a1.clone();
        for v in relu.data.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mut a2 = RealField::zeros(c, h, w);
        conv_accumulate(&relu, &params.data[params.block_w2_range(b)], k, &mut a2);
        for (hv, av) in hbuf.data.iter_mut().zip(a2.data.iter()) {
            *hv += params.scale * av;
        }
        pre_relu.push(a1);
    }
    block_inputs.push(hbuf.clone());

    let mut out2 = RealField::zeros(2, h, w);
    conv_accumulate(&hbuf, &params.data[params.conv_out_range()], k, &mut out2);
    // Global skip: the network computes x + correction.
    for (ov, iv) in out2.data.iter_mut().zip(input2.data.iter()) {
        *ov += iv;
    }

    let out = field_to_complex(&out2);
    (
        out,
        ResnetCache {
            input2,
            block_inputs,
            pre_relu,
        },
    )
}

/// Regularizer forward pass: complex image in, complex image out of identical
/// shape. Zero weights give the identity map.
pub fn resnet_forward(params: &NetworkParams, x: &ComplexImage) -> ComplexImage {
    resnet_forward_cached(params, x).0
}

/// Backward pass through the regularizer. Accumulates weight gradients into
/// `g_params` (flat, same layout as the parameter vector) and returns the
/// gradient with respect to the input image.
pub(crate) fn resnet_backward(
    params: &NetworkParams,
    cache: &ResnetCache,
    g_out: &ComplexGrid,
    g_params: &mut [f64],
) -> ComplexGrid {
    let (c, k) = (params.channels, params.kernel);
    let g2 = complex_to_field(g_out);
    let (h, w) = (g2.h, g2.w);

    let final_h = &cache.block_inputs[params.res_blocks];
    conv_back_weights(final_h, &g2, k, &mut g_params[params.conv_out_range()]);
    let mut g_h = RealField::zeros(c, h, w);
    conv_back_input(&g2, &params.data[params.conv_out_range()], k, &mut g_h);

    for b in (0..params.res_blocks).rev() {
        // Block: h_out = h_in + scale * conv2(relu(conv1(h_in))).
        let a1 = &cache.pre_relu[b];
        let mut relu = a1.clone();
        for v in relu.data.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mut g_a2 = g_h.clone();
        for v in g_a2.data.iter_mut() {
            *v *= params.scale;
        }
        conv_back_weights(&relu, &g_a2, k, &mut g_params[params.block_w2_range(b)]);
        let mut g_relu = RealField::zeros(c, h, w);
        conv_back_input(&g_a2, &params.data[params.block_w2_range(b)], k, &mut g_relu);
        for (g, &a) in g_relu.data.iter_mut().zip(a1.data.iter()) {
            if a <= 0.0 {
                *g = 0.0;
            }
        }
        conv_back_weights(
            &cache.block_inputs[b],
            &g_relu,
            k,
            &mut g_params[params.block_w1_range(b)],
        );
        conv_back_input(&g_relu, &params.data[params.block_w1_range(b)], k, &mut g_h);
    }

    conv_back_weights(&cache.input2, &g_h, k, &mut g_params[params.conv_in_range()]);
    let mut g_in2 = g2;
    conv_back_input(&g_h, &params.data[params.conv_in_range()], k, &mut g_in2);
    field_to_complex(&g_in2)
}

/// Data-consistency unit: fixed-budget CG on `(E^H E + mu I) x = rhs0 + mu z`
/// started from z. `rhs0` is the precomputed adjoint image `E^H y`.
pub(crate) fn dc_unit(
    op: &SenseOperator,
    rhs0: &ComplexImage,
    z: &ComplexImage,
    mu: f64,
    cg_iters: usize,
) -> Result<(ComplexImage, CgReport)> {
    let mut rhs = rhs0.clone();
    rhs.axpy(Complex64::new(mu, 0.0), z)?;
    crate::solvers::cg_normal_plus_identity(op, &rhs, z, mu, cg_iters, 0.0)
}

/// Full unrolled forward pass, returning every iterate x^0 .. x^T.
pub(crate) fn unrolled_forward_trace(
    params: &NetworkParams,
    cfg: &NetConfig,
    op: &SenseOperator,
    y: &[KSpaceGrid],
) -> Result<Vec<ComplexImage>> {
    op.check_measurements(y)?;
    let rhs0 = op.adjoint(y)?;
    let mu = params.mu();
    let mut iterates = Vec::with_capacity(cfg.unrolls + 1);
    iterates.push(rhs0.clone());
    for _ in 0..cfg.unrolls {
        let z = resnet_forward(params, iterates.last().expect("nonempty"));
        let (x, _) = dc_unit(op, &rhs0, &z, mu, cfg.cg_iters)?;
        iterates.push(x);
    }
    Ok(iterates)
}

/// Unrolled reconstruction: T alternations of regularizer and
/// data-consistency unit, starting from the adjoint image. `unrolls = 0`
/// returns the adjoint image itself.
pub fn unrolled_forward(
    params: &NetworkParams,
    cfg: &NetConfig,
    op: &SenseOperator,
    y: &[KSpaceGrid],
) -> Result<ComplexImage> {
    Ok(unrolled_forward_trace(params, cfg, op, y)?
        .pop()
        .expect("trace holds at least the adjoint image"))
}
