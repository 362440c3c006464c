//! Multimodal turn-taking toolkit: corpus I/O, IPU segmentation, feature
//! extraction, a semantic gesture VQ-VAE, fusion models and experiments.

pub mod analysis;
pub mod corpus;
pub mod experiment;
pub mod features;
pub mod harness;
pub mod model;
pub mod pipeline;
pub mod segment;
pub mod synth;
pub mod vqvae;
mod error;

pub use error::{Error, Result};

pub type VqVae32 = vqvae::VqVae<f32>;
pub type VqVae64 = vqvae::VqVae<f64>;
pub type TurnModel32 = model::TurnModel<f32>;
pub type TurnModel64 = model::TurnModel<f64>;
