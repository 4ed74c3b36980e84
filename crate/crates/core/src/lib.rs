//! Physics-based reconstruction of under-sampled multi-coil MRI.
//!
//! The library covers the full pipeline at desk scale: complex grids with a
//! centered unitary FFT, the SENSE encoding operator, acquisition masks and
//! their split into data-consistency and loss subsets, conjugate-gradient and
//! TGV solvers, an unrolled network with a trainable data-consistency penalty,
//! self-supervised and supervised training with hand-rolled reverse-mode
//! gradients, evaluation metrics, and a synthetic phantom dataset layer with a
//! bit-exact binary format.

pub mod dataio;
pub mod encoding;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod network;
pub mod rng;
pub mod sampling;
pub mod solvers;
pub mod training;

pub use error::{ReconError, Result};
pub use grid::{fft2c, norms, vdot, ComplexGrid, ComplexImage, FftDirection, KSpaceGrid};
pub use num_complex::Complex64;
