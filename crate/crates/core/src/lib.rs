//! Underwater color restoration with a U-Net denoising autoencoder.
//!
//! The crate is organised bottom-up:
//!
//! * [`engine`]: rank-4 tensors and the forward/backward kernels of every layer
//!   primitive the network uses, plus a finite-difference gradient checker.
//! * [`unet`]: the encoder/decoder assembly, its tape-driven backward pass and
//!   the binary checkpoint format.
//! * [`metrics`]: MSE, L1, SSIM, MS-SSIM and the weighted MS-SSIM + L1 loss,
//!   all with analytic gradients.
//! * [`degrade`]: the parametric underwater degradation model, area resizing,
//!   procedural scenes and on-disk paired datasets.
//! * [`train`]: Adam and the training loop.
//! * [`eval`]: test-set evaluation, throughput measurement and batch restoration.
//! * [`image_io`]: 8-bit RGB images to and from `[0, 1]` tensors.
//!
//! With the default `parallel` feature the heavy kernels fan out over rayon.
//! Every parallel split is fixed by tensor shape, never by thread count, so
//! results are bit-identical with or without the feature.
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod degrade;
pub mod engine;
mod error;
pub mod eval;
pub mod image_io;
pub mod metrics;
pub mod par;
pub mod train;
pub mod unet;

pub use engine::{Element, Tensor};
pub use error::{Error, Result};
pub use unet::{ModelWeights, UNetConfig};
