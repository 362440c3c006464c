//! Dense tensors, reverse-mode automatic differentiation and AdamW.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`). Training runs in
//! `f32`; gradient checks run in `f64`, where finite-difference tolerances are
//! reachable.

mod error;
pub mod gradcheck;
mod graph;
mod optim;
mod params;
mod rng;
mod scalar;
mod tensor;

pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use optim::{AdamW, AdamWConfig};
pub use params::{load_checkpoint, read_checkpoint, Init, Param, ParamGrads, ParamId, ParamStore};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Graph32 = Graph<f32>;
pub type Graph64 = Graph<f64>;
pub type ParamStore32 = ParamStore<f32>;
pub type ParamStore64 = ParamStore<f64>;
