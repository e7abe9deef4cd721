//! Differentiable operations, implemented as methods on [`Graph`](crate::Graph).

mod basic;
mod matmul;
mod nn;
mod shape;

pub use nn::{gelu_scalar, normal_cdf};
