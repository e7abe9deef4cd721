//! Dense `f64` tensors with tape-based reverse-mode differentiation, plus
//! the handful of neural-network operations the forecasting model needs.

mod error;
mod graph;
mod ops;
mod optim;
mod params;
mod rng;
mod tensor;

pub mod gradcheck;
pub mod snapshot;

pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use ops::{gelu_scalar, normal_cdf};
pub use optim::AdamW;
pub use params::{normal, uniform_fan_in, ParamId, ParamStore, Parameter};
pub use rng::SeedTree;
pub use tensor::Tensor;
