//! Reverse-mode autodiff over a handful of image ops, and the convolutional
//! generator used as a deep image prior.
//!
//! The generator is split at a chosen block into `G1` (latent code to
//! feature map) and `G2` (feature map to image). With several latent codes
//! the `G1` features are weighted per channel and summed before `G2`.

mod generator;
mod tape;
mod tensor;

pub use generator::{
    compose, g1_forward, mcdip_forward, Activation, AlphaInit, BlockSpec, ForwardPass, Generator,
    GeneratorConfig, GeneratorParams, Gradients, LatentCodes,
};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
