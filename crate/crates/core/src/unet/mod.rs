//! The U-Net denoising autoencoder.
//!
//! Encoder stage `s` (1-based) applies two 3x3 convolutions with
//! `base_channels * 2^(s-1)` feature maps, each followed by ReLU, then a 2x2
//! max-pool. Two more conv+ReLU pairs form the bottleneck. Each decoder stage
//! up-convolves (2x2 transposed conv, halving channels), concatenates the
//! result with the matching encoder output and applies three conv+ReLU
//! layers. A 1x1 projection to three channels and a sigmoid produce the
//! restored image. All 3x3 convolutions use padding 1 so the output has the
//! input's size.

mod checkpoint;
mod config;
mod model;
mod tape;

pub use checkpoint::{checkpoint_id, load_weights, save_weights, FORMAT_VERSION, MAGIC};
pub use config::{LayerKind, LayerSpec, UNetConfig};
pub use model::{build_model, ModelWeights};
pub use tape::{backward, forward, infer, Forward, LayerGrad, ModelGradients, Tape};
